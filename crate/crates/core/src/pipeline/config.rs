use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::LOG_PROB_FLOOR;
use crate::metrics::BleuConfig;
use crate::weights::WeightLearnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskPreset {
    Paraphrase,
    Anlg,
}

impl std::str::FromStr for TaskPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paraphrase" => Ok(TaskPreset::Paraphrase),
            "anlg" | "infill" => Ok(TaskPreset::Anlg),
            other => Err(Error::invalid("task preset", format!("unknown preset {other:?}"))),
        }
    }
}

/// Length budget for sampled generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLength {
    /// Source length plus a fixed number of tokens.
    SourcePlus(usize),
    Fixed(usize),
}

impl SampleLength {
    pub fn resolve(self, source_len: usize) -> usize {
        match self {
            SampleLength::SourcePlus(extra) => source_len + extra,
            SampleLength::Fixed(n) => n,
        }
        .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step_size: f64,
    pub convergence_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = WeightLearnConfig::default();
        OptimizerConfig {
            max_iters: d.max_iters,
            step_size: d.step_size,
            convergence_tol: d.convergence_tol,
        }
    }
}

/// Every parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskPreset,
    /// Contexts sampled per direction.
    pub n_c: usize,
    /// Contexts kept after pruning.
    pub k_c: usize,
    /// Nucleus parameter for context sampling.
    pub p_c: f64,
    /// Maximum context length in tokens.
    pub len_c: usize,
    /// Generations sampled per direction.
    pub n_samples: usize,
    pub sample_len: SampleLength,
    /// Target summed entropy (nats) for candidate sampling.
    pub h_sample: f64,
    pub entropy_tolerance: f64,
    pub novelty_threshold: Option<f64>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub log_prob_floor: f64,
    /// Token inserted between generation and each context.
    pub separator: Option<String>,
    /// Score paraphrases against all sampled contexts instead of the pruned ones.
    pub score_all_contexts: bool,
    /// Divide every scored log-probability by the number of scored tokens.
    pub length_normalize: bool,
    pub bleu: BleuConfig,
}

impl PipelineConfig {
    pub fn preset(task: TaskPreset) -> Self {
        let (sample_len, n_samples, n_c, h_sample, p_c) = match task {
            TaskPreset::Paraphrase => (SampleLength::SourcePlus(5), 30, 80, 4.0, 0.7),
            TaskPreset::Anlg => (SampleLength::Fixed(20), 20, 50, 6.0, 0.9),
        };
        PipelineConfig {
            task,
            n_c,
            k_c: 6,
            p_c,
            len_c: 50,
            n_samples,
            sample_len,
            h_sample,
            entropy_tolerance: 0.05,
            novelty_threshold: None,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            log_prob_floor: LOG_PROB_FLOOR,
            separator: None,
            score_all_contexts: false,
            length_normalize: false,
            bleu: BleuConfig::default(),
        }
    }

    pub fn paraphrase() -> Self {
        Self::preset(TaskPreset::Paraphrase)
    }

    pub fn anlg() -> Self {
        Self::preset(TaskPreset::Anlg)
    }

    pub fn weight_config(&self) -> WeightLearnConfig {
        WeightLearnConfig {
            max_iters: self.optimizer.max_iters,
            step_size: self.optimizer.step_size,
            convergence_tol: self.optimizer.convergence_tol,
            k_c: self.k_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: usize| {
            if v == 0 {
                Err(Error::invalid(name, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("n_c", self.n_c)?;
        positive("k_c", self.k_c)?;
        positive("len_c", self.len_c)?;
        positive("n_samples", self.n_samples)?;
        if !(self.p_c > 0.0 && self.p_c <= 1.0) {
            return Err(Error::invalid("p_c", "must be in (0, 1]"));
        }
        if !(self.h_sample >= 0.0 && self.h_sample.is_finite()) {
            return Err(Error::invalid("h_sample", "must be >= 0"));
        }
        if self.entropy_tolerance.is_nan() || self.entropy_tolerance <= 0.0 {
            return Err(Error::invalid("entropy_tolerance", "must be positive"));
        }
        if let Some(t) = self.novelty_threshold {
            if !(0.0..=100.0).contains(&t) {
                return Err(Error::invalid("novelty_threshold", "must be in [0, 100]"));
            }
        }
        self.weight_config().validate()
    }
}

/// Partial configuration, as read from a config file or flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOverrides {
    pub n_c: Option<usize>,
    pub k_c: Option<usize>,
    pub p_c: Option<f64>,
    pub len_c: Option<usize>,
    pub n_samples: Option<usize>,
    pub sample_len: Option<SampleLength>,
    pub h_sample: Option<f64>,
    pub entropy_tolerance: Option<f64>,
    pub novelty_threshold: Option<f64>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub step_size: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub log_prob_floor: Option<f64>,
    pub separator: Option<String>,
    pub score_all_contexts: Option<bool>,
    pub length_normalize: Option<bool>,
}

impl PipelineOverrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$($target).+ = v; })*
            };
        }
        set!(
            n_c => n_c,
            k_c => k_c,
            p_c => p_c,
            len_c => len_c,
            n_samples => n_samples,
            sample_len => sample_len,
            h_sample => h_sample,
            entropy_tolerance => entropy_tolerance,
            seed => seed,
            max_iters => optimizer.max_iters,
            step_size => optimizer.step_size,
            convergence_tol => optimizer.convergence_tol,
            log_prob_floor => log_prob_floor,
            score_all_contexts => score_all_contexts,
            length_normalize => length_normalize,
        );
        if self.novelty_threshold.is_some() {
            cfg.novelty_threshold = self.novelty_threshold;
        }
        if self.separator.is_some() {
            cfg.separator = self.separator.clone();
        }
    }
}
