//! End-to-end reflective decoding: contextualization, weight learning and
//! the paraphrasing and abductive infilling applications.

mod config;
mod infill;
pub mod manifest;
mod paraphrase;
mod postprocess;

pub use config::{OptimizerConfig, PipelineConfig, PipelineOverrides, SampleLength, TaskPreset};
pub use infill::{abductive_infill, explanation_logprobs, Baselines, InfillOutput};
pub use paraphrase::{paraphrase, paraphrase_score, ParaphraseOutput};
pub use postprocess::{postprocess, PostprocessMode, Trimmed};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ReflectiveSampler, Side};
use crate::error::{Error, Result};
use crate::lm::{Direction, LanguageModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{calibrate_p, sample_sequence_with, Calibration, EntropyTarget, NucleusParams};
use crate::vocab::{TokenId, TokenSeq, Vocabulary};
use crate::weights::{learn_weights_with, prune_weights, LearnedWeights};

/// A forward and a backward model over one vocabulary.
#[derive(Clone, Copy)]
pub struct LmPair<'a> {
    pub forward: &'a dyn LanguageModel,
    pub backward: &'a dyn LanguageModel,
}

impl<'a> LmPair<'a> {
    pub fn new(forward: &'a dyn LanguageModel, backward: &'a dyn LanguageModel) -> Result<Self> {
        if forward.direction() != Direction::Forward {
            return Err(Error::DirectionMismatch {
                expected: Direction::Forward,
                found: forward.direction(),
            });
        }
        if backward.direction() != Direction::Backward {
            return Err(Error::DirectionMismatch {
                expected: Direction::Backward,
                found: backward.direction(),
            });
        }
        if forward.vocab() != backward.vocab() {
            return Err(Error::VocabularyMismatch);
        }
        Ok(LmPair { forward, backward })
    }

    pub fn vocab(&self) -> &'a Vocabulary {
        self.forward.vocab()
    }

    pub fn get(&self, direction: Direction) -> &'a dyn LanguageModel {
        match direction {
            Direction::Forward => self.forward,
            Direction::Backward => self.backward,
        }
    }
}

/// Samples `cfg.n_c` contexts next to `s_src`: right contexts from a forward
/// model, left contexts from a backward one.
pub fn generate_contexts(
    lm: &dyn LanguageModel,
    s_src: &[TokenId],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<TokenSeq>> {
    if s_src.is_empty() {
        return Err(Error::EmptyInput("source text"));
    }
    lm.vocab().validate(s_src)?;
    (0..cfg.n_c)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, "context", i as u64));
            sample_sequence_with(lm, s_src, cfg.p_c, cfg.len_c, &mut rng)
        })
        .collect()
}

/// A learned sampler together with everything that produced it.
#[derive(Debug, Clone)]
pub struct BuiltSampler<'a> {
    pub sampler: ReflectiveSampler<'a>,
    pub contexts: Vec<TokenSeq>,
    pub learned: LearnedWeights,
}

impl BuiltSampler<'_> {
    pub fn direction(&self) -> Direction {
        self.sampler.direction()
    }
}

pub(crate) fn separator_id(cfg: &PipelineConfig, vocab: &Vocabulary) -> Result<Option<TokenId>> {
    cfg.separator
        .as_deref()
        .map(|s| {
            vocab
                .id(s)
                .ok_or_else(|| Error::invalid("separator", format!("{s:?} is not in the vocabulary")))
        })
        .transpose()
}

/// Contextualize `s_src`, learn weights and prune. `direction` is the
/// decoding direction of the resulting sampler.
pub fn build_reflective_sampler<'a>(
    s_src: &[TokenId],
    direction: Direction,
    lms: &LmPair<'a>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<BuiltSampler<'a>> {
    cfg.validate()?;
    let side = Side::for_decoder(direction);
    let generator = lms.get(side.generator_direction());
    let decoder = lms.get(direction);
    let separator = separator_id(cfg, lms.vocab())?;
    let floor = cfg.log_prob_floor;

    let contexts = generate_contexts(generator, s_src, cfg, seed)?;
    let learned = learn_weights_with(
        contexts.clone(),
        side,
        s_src,
        decoder,
        &cfg.weight_config(),
        |s| s.with_floor(floor).with_separator(separator),
    )?;
    let pruned = prune_weights(&learned.ensemble, cfg.k_c)?;
    let sampler = ReflectiveSampler::new(pruned, decoder)?
        .with_floor(floor)
        .with_separator(separator);
    Ok(BuiltSampler { sampler, contexts, learned })
}

pub(crate) fn calibrate(
    sampler: &ReflectiveSampler<'_>,
    s_src: &[TokenId],
    cfg: &PipelineConfig,
) -> Result<Calibration> {
    let mut target = EntropyTarget::new(cfg.h_sample);
    target.tolerance = cfg.entropy_tolerance;
    calibrate_p(sampler, s_src, &[], &target)
}

pub(crate) fn sample_candidates(
    built: &BuiltSampler<'_>,
    inner: &[TokenId],
    p: f64,
    max_len: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TokenSeq>> {
    let params = NucleusParams::new(p, max_len, seed)?;
    built.sampler.sample(inner, &params, count)
}

/// A generated text with its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: TokenSeq,
    /// Decoding direction of the sampler that produced it.
    pub origin: Direction,
    /// Position in sampling order (forward samples first).
    pub index: usize,
    pub rd_logprob: f64,
    pub task_score: f64,
    /// `100 − BLEU(tokens, source)`; absent for empty text.
    pub novelty: Option<f64>,
    pub passed_filter: bool,
    /// Post-processing found no sentence boundary.
    pub untrimmed: bool,
}

/// Descending task score, then descending RD log-probability, then sampling
/// order.
pub fn rank_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| {
        b.task_score
            .total_cmp(&a.task_score)
            .then_with(|| b.rd_logprob.total_cmp(&a.rd_logprob))
            .then_with(|| a.index.cmp(&b.index))
    });
}

/// Keeps the first occurrence of each exact token sequence.
pub fn dedup_first<T>(items: Vec<T>, key: impl Fn(&T) -> &TokenSeq) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .filter(|it| seen.insert(key(it).clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    /// No candidate met the threshold; the most novel one was taken.
    pub fallback: bool,
}

/// First ranked candidate whose novelty reaches `threshold`, else the most
/// novel one (earliest on ties) with the fallback flag.
pub fn select_with_novelty_threshold(ranked: &[Candidate], threshold: f64) -> Result<Selection> {
    if ranked.is_empty() {
        return Err(Error::EmptyInput("ranked candidates"));
    }
    if threshold <= 0.0 {
        return Ok(Selection { index: 0, fallback: false });
    }
    let nov = |c: &Candidate| c.novelty.unwrap_or(f64::NEG_INFINITY);
    if let Some(index) = ranked.iter().position(|c| nov(c) >= threshold) {
        return Ok(Selection { index, fallback: false });
    }
    let index = ranked
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| nov(a).total_cmp(&nov(b)).then(j.cmp(i)))
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok(Selection { index, fallback: true })
}

pub(crate) fn score_term(logprob: f64, len: usize, normalize: bool) -> f64 {
    if normalize && len > 0 {
        logprob / len as f64
    } else {
        logprob
    }
}

/// What a sampler was built from, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub direction: Direction,
    pub side: Side,
    /// All sampled contexts in sampling order.
    pub contexts: Vec<TokenSeq>,
    /// Learned weights over `contexts`, before pruning.
    pub learned_weights: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Contexts and weights the sampler decodes with.
    pub ensemble: crate::ensemble::ContextEnsemble,
    pub calibration: Calibration,
    pub trace: crate::weights::WeightTrace,
}

impl SamplerReport {
    pub(crate) fn new(built: &BuiltSampler<'_>, calibration: Calibration) -> Self {
        SamplerReport {
            direction: built.direction(),
            side: built.sampler.ensemble().side(),
            contexts: built.contexts.clone(),
            learned_weights: built.learned.ensemble.weights().to_vec(),
            objective: built.learned.objective,
            converged: built.learned.trace.converged,
            iterations: built.learned.trace.iterates.len() - 1,
            ensemble: built.sampler.ensemble().clone(),
            calibration,
            trace: built.learned.trace.clone(),
        }
    }
}

pub(crate) fn direction_index(d: Direction) -> u64 {
    match d {
        Direction::Forward => 0,
        Direction::Backward => 1,
    }
}

/// Builds, calibrates and samples from one direction.
pub(crate) fn run_direction<'a>(
    s_src: &[TokenId],
    direction: Direction,
    inner: &[TokenId],
    sample_len: usize,
    lms: &LmPair<'a>,
    cfg: &PipelineConfig,
) -> Result<(BuiltSampler<'a>, Calibration, Vec<TokenSeq>)> {
    let idx = direction_index(direction);
    let built = build_reflective_sampler(s_src, direction, lms, cfg, derive_seed(cfg.seed, "sampler", idx))?;
    let cal = calibrate(&built.sampler, s_src, cfg)?;
    let raw = sample_candidates(
        &built,
        inner,
        cal.p,
        sample_len,
        cfg.n_samples,
        derive_seed(cfg.seed, "candidates", idx),
    )?;
    Ok((built, cal, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(index: usize, score: f64, rd: f64, novelty: f64) -> Candidate {
        Candidate {
            tokens: vec![3 + index],
            origin: Direction::Forward,
            index,
            rd_logprob: rd,
            task_score: score,
            novelty: Some(novelty),
            passed_filter: true,
            untrimmed: false,
        }
    }

    #[test]
    fn threshold_selection() {
        let ranked = vec![cand(0, 0.0, 0.0, 10.0), cand(1, 0.0, 0.0, 40.0), cand(2, 0.0, 0.0, 50.0)];
        assert_eq!(select_with_novelty_threshold(&ranked, 0.0).unwrap().index, 0);
        let s = select_with_novelty_threshold(&ranked, 30.0).unwrap();
        assert_eq!((s.index, s.fallback), (1, false));
        let s = select_with_novelty_threshold(&ranked, 60.0).unwrap();
        assert_eq!((s.index, s.fallback), (2, true));
        assert!(select_with_novelty_threshold(&[], 0.0).is_err());
    }

    #[test]
    fn ranking_tie_breaks() {
        let mut c = vec![cand(0, -1.0, -5.0, 0.0), cand(1, -1.0, -2.0, 0.0), cand(2, 0.0, -9.0, 0.0), cand(3, -1.0, -2.0, 0.0)];
        rank_candidates(&mut c);
        let order: Vec<usize> = c.iter().map(|c| c.index).collect();
        assert_eq!(order, vec![2, 1, 3, 0]);
    }

    #[test]
    fn dedup_keeps_first() {
        let items = vec![vec![1, 2], vec![3], vec![1, 2]];
        assert_eq!(dedup_first(items, |x| x), vec![vec![1, 2], vec![3]]);
    }
}
