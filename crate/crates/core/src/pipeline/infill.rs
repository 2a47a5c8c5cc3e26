use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    dedup_first, postprocess, rank_candidates, run_direction, score_term, Candidate, LmPair,
    PipelineConfig, PostprocessMode, SamplerReport,
};
use crate::error::{Error, Result};
use crate::lm::{sequence_logprob, Direction};
use crate::metrics::novelty;
use crate::vocab::TokenId;

/// How well each observation is explained without any hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// `log LM←(o1 | o2)`
    pub o1_given_o2: f64,
    /// `log LM→(o2 | o1)`
    pub o2_given_o1: f64,
}

#[derive(Debug, Clone)]
pub struct InfillOutput {
    /// Hypotheses passing the filter, best first.
    pub ranked: Vec<Candidate>,
    /// Hypotheses that leave either observation less explained, in sampling
    /// order.
    pub rejected: Vec<Candidate>,
    pub baselines: Baselines,
    pub samplers: Vec<SamplerReport>,
    pub sample_len: usize,
}

/// Explanation log-probabilities `(log LM←(o1 | h + o2), log LM→(o2 | o1 + h))`.
pub fn explanation_logprobs(
    h: &[TokenId],
    o1: &[TokenId],
    o2: &[TokenId],
    lms: &LmPair<'_>,
) -> Result<(f64, f64)> {
    let right = [h, o2].concat();
    let left = [o1, h].concat();
    Ok((
        sequence_logprob(lms.backward, o1, &right)?,
        sequence_logprob(lms.forward, o2, &left)?,
    ))
}

/// Generates hypotheses between `o1` and `o2`.
pub fn abductive_infill(
    o1: &[TokenId],
    o2: &[TokenId],
    lms: &LmPair<'_>,
    cfg: &PipelineConfig,
) -> Result<InfillOutput> {
    if o1.is_empty() {
        return Err(Error::EmptyInput("first observation"));
    }
    if o2.is_empty() {
        return Err(Error::EmptyInput("second observation"));
    }
    cfg.validate()?;
    let vocab = lms.vocab();
    vocab.validate(o1)?;
    vocab.validate(o2)?;
    let s_src = [o1, o2].concat();
    let sample_len = cfg.sample_len.resolve(s_src.len());

    // Right-to-left hypotheses sit left of o2; left-to-right ones right of o1.
    let (fwd, bwd) = rayon::join(
        || run_direction(&s_src, Direction::Forward, o1, sample_len, lms, cfg),
        || run_direction(&s_src, Direction::Backward, o2, sample_len, lms, cfg),
    );
    let (fwd, fwd_cal, fwd_raw) = fwd?;
    let (bwd, bwd_cal, bwd_raw) = bwd?;

    let mut trimmed = Vec::new();
    for (built, inner, raws) in [(&fwd, o1, fwd_raw), (&bwd, o2, bwd_raw)] {
        for raw in raws {
            let t = postprocess(&raw, PostprocessMode::Infill, built.direction(), vocab);
            trimmed.push((t, built, inner));
        }
    }
    let trimmed = dedup_first(trimmed, |(t, _, _)| &t.tokens);

    let baselines = Baselines {
        o1_given_o2: sequence_logprob(lms.backward, o1, o2)?,
        o2_given_o1: sequence_logprob(lms.forward, o2, o1)?,
    };
    let norm = cfg.length_normalize;
    let scored = trimmed
        .into_par_iter()
        .enumerate()
        .map(|(index, (t, built, inner))| {
            let (l1, l2) = explanation_logprobs(&t.tokens, o1, o2, lms)?;
            let novelty = if t.tokens.is_empty() {
                None
            } else {
                Some(novelty(&t.tokens, &s_src, &cfg.bleu)?)
            };
            Ok(Candidate {
                rd_logprob: built.sampler.sequence_logprob(&t.tokens, inner)?,
                task_score: score_term(l1, o1.len(), norm) + score_term(l2, o2.len(), norm),
                novelty,
                origin: built.direction(),
                index,
                passed_filter: l1 > baselines.o1_given_o2 && l2 > baselines.o2_given_o1,
                untrimmed: t.untrimmed,
                tokens: t.tokens,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut ranked, rejected): (Vec<_>, Vec<_>) = scored.into_iter().partition(|c| c.passed_filter);
    rank_candidates(&mut ranked);

    Ok(InfillOutput {
        ranked,
        rejected,
        baselines,
        samplers: vec![SamplerReport::new(&fwd, fwd_cal), SamplerReport::new(&bwd, bwd_cal)],
        sample_len,
    })
}
