//! The `paraphrase` and `infill` commands.

use std::path::{Path, PathBuf};

use refdec::ngram::load_lm;
use refdec::pipeline::manifest::{
    CandidateEntry, Diagnostics, ModelPaths, RecordEntry, RecordStatus, RunManifest, RunSummary,
    SamplerEntry, SelectedEntry, RUN_FORMAT, RUN_VERSION,
};
use refdec::pipeline::{select_with_novelty_threshold, SamplerReport, Selection};
use refdec::rng::derive_seed;
use refdec::{abductive_infill, paraphrase, Error, LanguageModel, LmPair, NgramLm, PipelineConfig, TaskPreset};

use crate::config::{input, required, resolve_pipeline, RunConfigFile};
use crate::failure::{Context, Failure};
use crate::io::{read_lines, write_json, write_lines};
use crate::GenerateArgs;

pub const NONE_MARKER: &str = "<none>";
pub const SKIPPED_MARKER: &str = "<skipped>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Paraphrase,
    Infill,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Paraphrase => "paraphrase",
            Task::Infill => "infill",
        }
    }

    fn default_preset(self) -> TaskPreset {
        match self {
            Task::Paraphrase => TaskPreset::Paraphrase,
            Task::Infill => TaskPreset::Anlg,
        }
    }
}

fn load_model(path: &Path) -> Result<NgramLm, Failure> {
    load_lm(path).context(format!("loading {}", path.display()))
}

struct Ctx<'a> {
    lms: LmPair<'a>,
    /// Supplies the tokenizer for input text.
    model: &'a NgramLm,
    cfg: &'a PipelineConfig,
    threshold: f64,
    full: bool,
}

/// Output line plus manifest record for one input line.
struct Outcome {
    line: String,
    record: RecordEntry,
    samplers: Vec<SamplerReport>,
}

fn sampler_entries(reports: &[SamplerReport], ctx: &Ctx<'_>) -> Vec<SamplerEntry> {
    let vocab = ctx.lms.vocab();
    reports.iter().map(|r| SamplerEntry::new(r, vocab, ctx.full)).collect()
}

fn entries(cands: &[refdec::pipeline::Candidate], ctx: &Ctx<'_>) -> Option<Vec<CandidateEntry>> {
    ctx.full
        .then(|| cands.iter().map(|c| CandidateEntry::new(c, ctx.lms.vocab())).collect())
}

fn failed(mut record: RecordEntry, err: Error) -> Outcome {
    record.status = match err {
        Error::NoCandidates => RecordStatus::NoCandidates,
        _ => RecordStatus::Failed,
    };
    record.message = Some(err.to_string());
    Outcome { line: NONE_MARKER.into(), record, samplers: Vec::new() }
}

fn skipped(mut record: RecordEntry, why: &str) -> Outcome {
    record.status = RecordStatus::Skipped;
    record.message = Some(why.into());
    Outcome { line: SKIPPED_MARKER.into(), record, samplers: Vec::new() }
}

fn paraphrase_line(ctx: &Ctx<'_>, number: usize, seed: u64, text: &str) -> Outcome {
    let record = RecordEntry::new(number, seed, RecordStatus::Ok, vec![text.to_string()]);
    let src = ctx.model.encode_text(text);
    if src.is_empty() {
        return skipped(record, "empty source");
    }
    let mut cfg = ctx.cfg.clone();
    cfg.seed = seed;
    let out = match paraphrase(&src, &ctx.lms, &cfg) {
        Ok(o) => o,
        Err(e) => return failed(record, e),
    };
    let selection = match select_with_novelty_threshold(&out.ranked, ctx.threshold) {
        Ok(s) => s,
        Err(e) => return failed(record, e),
    };
    let mut record = record;
    record.sample_len = Some(out.sample_len);
    record.selected = Some(SelectedEntry::new(&out.ranked, selection, ctx.lms.vocab()));
    record.num_candidates = out.ranked.len();
    record.samplers = sampler_entries(&out.samplers, ctx);
    record.candidates = entries(&out.ranked, ctx);
    Outcome {
        line: ctx.lms.vocab().decode(&out.ranked[selection.index].tokens),
        record,
        samplers: out.samplers,
    }
}

fn infill_line(ctx: &Ctx<'_>, number: usize, seed: u64, text: &str) -> Outcome {
    let fields: Vec<&str> = text.split('\t').collect();
    let record = RecordEntry::new(
        number,
        seed,
        RecordStatus::Ok,
        fields.iter().map(|f| f.to_string()).collect(),
    );
    if fields.len() != 2 {
        return skipped(record, &format!("expected 2 tab-separated fields, found {}", fields.len()));
    }
    let o1 = ctx.model.encode_text(fields[0]);
    let o2 = ctx.model.encode_text(fields[1]);
    if o1.is_empty() || o2.is_empty() {
        return skipped(record, "empty observation");
    }
    let mut cfg = ctx.cfg.clone();
    cfg.seed = seed;
    let out = match abductive_infill(&o1, &o2, &ctx.lms, &cfg) {
        Ok(o) => o,
        Err(e) => return failed(record, e),
    };
    let mut record = record;
    record.sample_len = Some(out.sample_len);
    record.baselines = Some(out.baselines);
    record.num_candidates = out.ranked.len();
    record.num_rejected = out.rejected.len();
    record.samplers = sampler_entries(&out.samplers, ctx);
    record.candidates = entries(&out.ranked, ctx);
    record.rejected = entries(&out.rejected, ctx);
    let line = if out.ranked.is_empty() {
        record.status = RecordStatus::NoCandidates;
        NONE_MARKER.to_string()
    } else {
        let sel = Selection { index: 0, fallback: false };
        record.selected = Some(SelectedEntry::new(&out.ranked, sel, ctx.lms.vocab()));
        ctx.lms.vocab().decode(&out.ranked[0].tokens)
    };
    Outcome { line, record, samplers: out.samplers }
}

fn default_manifest(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn run(task: Task, args: GenerateArgs) -> Result<(), Failure> {
    let file = RunConfigFile::load(args.common.config.as_deref(), task.name())?;
    let fwd_path = input(args.forward, &file.models.forward, "forward")?;
    let bwd_path = input(args.backward, &file.models.backward, "backward")?;
    let in_path = input(args.input, &file.io.input, "input")?;
    let out_path = required(args.output, &file.io.output, "output")?;
    let manifest_path = args
        .manifest
        .or_else(|| file.io.manifest.clone())
        .unwrap_or_else(|| default_manifest(&out_path));
    let diagnostics_path = args.diagnostics.or_else(|| file.io.diagnostics.clone());
    let full = args.full || file.full.unwrap_or(false);
    let cfg = resolve_pipeline(
        task.default_preset(),
        &file,
        args.task_preset,
        args.common.seed,
        args.novelty_threshold,
    )?;

    let fwd = load_model(&fwd_path)?;
    let bwd = load_model(&bwd_path)?;
    if fwd.direction() != refdec::Direction::Forward || bwd.direction() != refdec::Direction::Backward {
        return Err(Failure::data("--forward must be a forward model and --backward a backward one"));
    }
    let lms = LmPair::new(&fwd, &bwd).context("model pair")?;

    let lines = read_lines(&in_path)?;
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(Failure::data(format!("{}: no input records", in_path.display())));
    }

    let ctx = Ctx {
        lms,
        model: &fwd,
        cfg: &cfg,
        threshold: cfg.novelty_threshold.unwrap_or(0.0),
        full,
    };
    let mut outputs = Vec::with_capacity(lines.len());
    let mut records = Vec::with_capacity(lines.len());
    let mut diagnostics = Diagnostics::new();
    for (i, text) in lines.iter().enumerate() {
        let number = i + 1;
        let seed = derive_seed(cfg.seed, "record", i as u64);
        let outcome = if text.trim().is_empty() {
            skipped(RecordEntry::new(number, seed, RecordStatus::Ok, vec![text.clone()]), "blank line")
        } else {
            match task {
                Task::Paraphrase => paraphrase_line(&ctx, number, seed, text),
                Task::Infill => infill_line(&ctx, number, seed, text),
            }
        };
        if let Some(msg) = &outcome.record.message {
            eprintln!("line {number}: {msg}");
        }
        diagnostics.push(number, &outcome.samplers);
        outputs.push(outcome.line);
        records.push(outcome.record);
    }

    let summary = RunSummary::from_records(&records);
    let manifest = RunManifest {
        format: RUN_FORMAT.into(),
        version: RUN_VERSION,
        command: task.name().into(),
        task: cfg.task,
        config: cfg.clone(),
        run_seed: cfg.seed,
        novelty_threshold: ctx.threshold,
        models: ModelPaths {
            forward: fwd_path.display().to_string(),
            backward: bwd_path.display().to_string(),
        },
        input: in_path.display().to_string(),
        output: out_path.display().to_string(),
        full,
        summary,
        records,
    };
    write_lines(&out_path, &outputs)?;
    write_json(&manifest_path, &manifest)?;
    if let Some(p) = diagnostics_path {
        write_json(&p, &diagnostics)?;
    }
    eprintln!(
        "{} records: {} ok, {} without candidates, {} skipped, {} failed",
        summary.records, summary.ok, summary.no_candidates, summary.skipped, summary.failed
    );
    Ok(())
}
