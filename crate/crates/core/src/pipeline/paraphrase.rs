use rayon::prelude::*;

use super::{
    dedup_first, postprocess, rank_candidates, run_direction, score_term, BuiltSampler, Candidate,
    LmPair, PipelineConfig, PostprocessMode, SamplerReport,
};
use crate::error::{Error, Result};
use crate::lm::{sequence_logprob, Direction, LanguageModel};
use crate::metrics::novelty;
use crate::vocab::{TokenId, TokenSeq};

#[derive(Debug, Clone)]
pub struct ParaphraseOutput {
    /// Best first.
    pub ranked: Vec<Candidate>,
    /// Left-to-right sampler first, then right-to-left.
    pub samplers: Vec<SamplerReport>,
    pub sample_len: usize,
}

fn scoring_contexts<'s>(built: &'s BuiltSampler<'_>, cfg: &PipelineConfig) -> &'s [TokenSeq] {
    if cfg.score_all_contexts {
        &built.contexts
    } else {
        built.sampler.ensemble().contexts()
    }
}

/// Mean (optionally per-token) log-probability of `contexts` next to `text`.
fn context_fit(
    lm: &dyn LanguageModel,
    text: &[TokenId],
    contexts: &[TokenSeq],
    normalize: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for c in contexts {
        total += score_term(sequence_logprob(lm, c, text)?, c.len(), normalize);
    }
    Ok(total / contexts.len() as f64)
}

/// Contextual score of a paraphrase: how well it predicts the right contexts
/// of the source under the forward model plus the left contexts under the
/// backward model.
pub fn paraphrase_score(
    text: &[TokenId],
    lms: &LmPair<'_>,
    right_contexts: &[TokenSeq],
    left_contexts: &[TokenSeq],
    normalize: bool,
) -> Result<f64> {
    Ok(context_fit(lms.forward, text, right_contexts, normalize)?
        + context_fit(lms.backward, text, left_contexts, normalize)?)
}

/// Paraphrases `s_src`: samples from both directions, trims, deduplicates and
/// ranks by contextual score.
pub fn paraphrase(s_src: &[TokenId], lms: &LmPair<'_>, cfg: &PipelineConfig) -> Result<ParaphraseOutput> {
    if s_src.is_empty() {
        return Err(Error::EmptyInput("source text"));
    }
    cfg.validate()?;
    let vocab = lms.vocab();
    vocab.validate(s_src)?;
    let sample_len = cfg.sample_len.resolve(s_src.len());

    let (fwd, bwd) = rayon::join(
        || run_direction(s_src, Direction::Forward, &[], sample_len, lms, cfg),
        || run_direction(s_src, Direction::Backward, &[], sample_len, lms, cfg),
    );
    let (fwd, fwd_cal, fwd_raw) = fwd?;
    let (bwd, bwd_cal, bwd_raw) = bwd?;

    let mut trimmed = Vec::new();
    for (built, raws) in [(&fwd, fwd_raw), (&bwd, bwd_raw)] {
        for raw in raws {
            let t = postprocess(&raw, PostprocessMode::Paraphrase, built.direction(), vocab);
            if !t.tokens.is_empty() {
                trimmed.push((t, built));
            }
        }
    }
    let trimmed = dedup_first(trimmed, |(t, _)| &t.tokens);
    if trimmed.is_empty() {
        return Err(Error::NoCandidates);
    }

    // Right contexts belong to the right-to-left sampler and vice versa.
    let right = scoring_contexts(&bwd, cfg);
    let left = scoring_contexts(&fwd, cfg);
    let mut ranked = trimmed
        .into_par_iter()
        .enumerate()
        .map(|(index, (t, built))| {
            Ok(Candidate {
                rd_logprob: built.sampler.sequence_logprob(&t.tokens, &[])?,
                task_score: paraphrase_score(&t.tokens, lms, right, left, cfg.length_normalize)?,
                novelty: Some(novelty(&t.tokens, s_src, &cfg.bleu)?),
                origin: built.direction(),
                index,
                passed_filter: true,
                untrimmed: t.untrimmed,
                tokens: t.tokens,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_candidates(&mut ranked);

    Ok(ParaphraseOutput {
        ranked,
        samplers: vec![SamplerReport::new(&fwd, fwd_cal), SamplerReport::new(&bwd, bwd_cal)],
        sample_len,
    })
}
