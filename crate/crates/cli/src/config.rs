//! TOML run configuration files.

use std::path::{Path, PathBuf};

use refdec::pipeline::PipelineOverrides;
use refdec::{PipelineConfig, TaskPreset};
use serde::Deserialize;

use crate::failure::Failure;
use crate::io::{read_text, require_file};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub forward: Option<PathBuf>,
    pub backward: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub held_out: Option<PathBuf>,
    pub forward_out: Option<PathBuf>,
    pub backward_out: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub order: Option<usize>,
    pub smoothing_k: Option<f64>,
    pub lowercase: Option<bool>,
    pub split_punctuation: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub max_ngram_order: Option<usize>,
    pub smoothing: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Command the file is meant for; checked against the invoked one.
    pub task: Option<String>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub full: Option<bool>,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub io: IoSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub pipeline: PipelineOverrides,
}

impl RunConfigFile {
    /// Loads `path` if given and checks it is meant for `command`.
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_text(path)?;
        let file: RunConfigFile = toml::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        if let Some(task) = &file.task {
            if task != command {
                return Err(Failure::usage(format!(
                    "{}: configured for `{task}`, not `{command}`",
                    path.display()
                )));
            }
        }
        Ok(file)
    }

    pub fn preset(&self) -> Result<Option<TaskPreset>, Failure> {
        self.preset
            .as_deref()
            .map(|p| p.parse().map_err(Failure::from))
            .transpose()
    }
}

/// Flag value, else file value, else a usage error naming the flag.
pub fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| Failure::usage(format!("missing --{name}")))
}

/// An existing input file.
pub fn input(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    let p = required(flag, file, name)?;
    require_file(&p)?;
    Ok(p)
}

/// Preset defaults, then the file, then flags.
pub fn resolve_pipeline(
    default_preset: TaskPreset,
    file: &RunConfigFile,
    preset_flag: Option<TaskPreset>,
    seed_flag: Option<u64>,
    novelty_flag: Option<f64>,
) -> Result<PipelineConfig, Failure> {
    let preset = preset_flag.or(file.preset()?).unwrap_or(default_preset);
    let mut cfg = PipelineConfig::preset(preset);
    file.pipeline.apply(&mut cfg);
    if let Some(s) = file.seed {
        cfg.seed = s;
    }
    if let Some(s) = seed_flag {
        cfg.seed = s;
    }
    if novelty_flag.is_some() {
        cfg.novelty_threshold = novelty_flag;
    }
    cfg.validate()?;
    Ok(cfg)
}
