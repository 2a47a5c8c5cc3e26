//! Serializable run records written next to pipeline outputs.

use serde::{Deserialize, Serialize};

use super::{Baselines, Candidate, PipelineConfig, SamplerReport, Selection, TaskPreset};
use crate::lm::Direction;
use crate::sampling::Calibration;
use crate::vocab::{TokenSeq, Vocabulary};
use crate::weights::WeightIterate;

pub const RUN_FORMAT: &str = "refdec-run";
pub const RUN_VERSION: u32 = 1;
pub const DIAGNOSTICS_FORMAT: &str = "refdec-diagnostics";
pub const DIAGNOSTICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPaths {
    pub forward: String,
    pub backward: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// Nothing survived post-processing or the filter.
    NoCandidates,
    /// The input line could not be parsed.
    Skipped,
    /// The pipeline returned an error.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub text: String,
    #[serde(flatten)]
    pub candidate: Candidate,
}

impl CandidateEntry {
    pub fn new(candidate: &Candidate, vocab: &Vocabulary) -> Self {
        CandidateEntry {
            text: vocab.decode(&candidate.tokens),
            candidate: candidate.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedContext {
    pub text: String,
    pub tokens: TokenSeq,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerEntry {
    pub direction: Direction,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub calibration: Calibration,
    /// Retained contexts with their renormalized weights.
    pub ensemble: Vec<WeightedContext>,
    /// Every sampled context with its learned weight. Full mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_contexts: Option<Vec<WeightedContext>>,
}

impl SamplerEntry {
    pub fn new(report: &SamplerReport, vocab: &Vocabulary, full: bool) -> Self {
        let entry = |tokens: &TokenSeq, weight: f64| WeightedContext {
            text: vocab.decode(tokens),
            tokens: tokens.clone(),
            weight,
        };
        let ensemble = report
            .ensemble
            .contexts()
            .iter()
            .zip(report.ensemble.weights())
            .map(|(c, &w)| entry(c, w))
            .collect();
        let all_contexts = full.then(|| {
            report
                .contexts
                .iter()
                .zip(&report.learned_weights)
                .map(|(c, &w)| entry(c, w))
                .collect()
        });
        SamplerEntry {
            direction: report.direction,
            objective: report.objective,
            converged: report.converged,
            iterations: report.iterations,
            calibration: report.calibration,
            ensemble,
            all_contexts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEntry {
    pub text: String,
    /// Rank of the selection in `candidates`.
    pub rank: usize,
    pub fallback: bool,
    pub task_score: f64,
    pub novelty: Option<f64>,
}

impl SelectedEntry {
    pub fn new(ranked: &[Candidate], selection: Selection, vocab: &Vocabulary) -> Self {
        let c = &ranked[selection.index];
        SelectedEntry {
            text: vocab.decode(&c.tokens),
            rank: selection.index,
            fallback: selection.fallback,
            task_score: c.task_score,
            novelty: c.novelty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    /// 1-based input line.
    pub line: usize,
    pub seed: u64,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Input fields as read: the source, or both observations.
    pub input: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<SelectedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Baselines>,
    pub num_candidates: usize,
    pub num_rejected: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samplers: Vec<SamplerEntry>,
    /// Ranked candidates. Full mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateEntry>>,
    /// Filtered-out hypotheses. Full mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<Vec<CandidateEntry>>,
}

impl RecordEntry {
    pub fn new(line: usize, seed: u64, status: RecordStatus, input: Vec<String>) -> Self {
        RecordEntry {
            line,
            seed,
            status,
            message: None,
            input,
            sample_len: None,
            selected: None,
            baselines: None,
            num_candidates: 0,
            num_rejected: 0,
            samplers: Vec::new(),
            candidates: None,
            rejected: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: usize,
    pub ok: usize,
    pub no_candidates: usize,
    pub skipped: usize,
    pub failed: usize,
    pub fallback: usize,
}

impl RunSummary {
    pub fn from_records(records: &[RecordEntry]) -> Self {
        let mut s = RunSummary {
            records: records.len(),
            ..Default::default()
        };
        for r in records {
            match r.status {
                RecordStatus::Ok => s.ok += 1,
                RecordStatus::NoCandidates => s.no_candidates += 1,
                RecordStatus::Skipped => s.skipped += 1,
                RecordStatus::Failed => s.failed += 1,
            }
            if r.selected.as_ref().is_some_and(|x| x.fallback) {
                s.fallback += 1;
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub task: TaskPreset,
    /// Fully resolved configuration, defaults included.
    pub config: PipelineConfig,
    pub run_seed: u64,
    pub novelty_threshold: f64,
    pub models: ModelPaths,
    pub input: String,
    pub output: String,
    pub full: bool,
    pub summary: RunSummary,
    pub records: Vec<RecordEntry>,
}

/// One weight-learning trace per record and direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsEntry {
    pub line: usize,
    pub direction: Direction,
    pub converged: bool,
    pub iterates: Vec<WeightIterate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub format: String,
    pub version: u32,
    pub entries: Vec<DiagnosticsEntry>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Diagnostics {
            format: DIAGNOSTICS_FORMAT.to_string(),
            version: DIAGNOSTICS_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, line: usize, samplers: &[SamplerReport]) {
        for s in samplers {
            self.entries.push(DiagnosticsEntry {
                line,
                direction: s.direction,
                converged: s.trace.converged,
                iterates: s.trace.iterates.clone(),
            });
        }
    }
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self::new()
    }
}
