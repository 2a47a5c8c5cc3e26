//! Sentence-level BLEU, novelty and contextual cross-entropy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{sequence_logprob, LanguageModel};
use crate::vocab::{TokenId, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuSmoothing {
    None,
    /// Adds one to numerator and denominator of the 2..N-gram precisions.
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_ngram_order: usize,
    pub smoothing: BleuSmoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_ngram_order: 4,
            smoothing: BleuSmoothing::AddOne,
        }
    }
}

impl BleuConfig {
    pub fn unsmoothed(max_ngram_order: usize) -> Self {
        BleuConfig {
            max_ngram_order,
            smoothing: BleuSmoothing::None,
        }
    }
}

fn ngram_counts(seq: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    for gram in seq.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU in `[0, 100]`: geometric mean of clipped n-gram precisions times the
/// brevity penalty against the closest reference length.
///
/// Orders longer than the candidate are left out of the mean.
pub fn bleu(candidate: &[TokenId], references: &[TokenSeq], cfg: &BleuConfig) -> Result<f64> {
    if !(1..=4).contains(&cfg.max_ngram_order) {
        return Err(Error::invalid("max_ngram_order", "must be in 1..=4"));
    }
    if candidate.is_empty() {
        return Err(Error::EmptyInput("BLEU candidate"));
    }
    if references.is_empty() || references.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyInput("BLEU references"));
    }
    let orders = cfg.max_ngram_order.min(candidate.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[TokenId], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len() + 1 - n;
        let (num, den) = match cfg.smoothing {
            BleuSmoothing::AddOne if n > 1 => (matched as f64 + 1.0, total as f64 + 1.0),
            _ => (matched as f64, total as f64),
        };
        if num == 0.0 {
            return Ok(0.0);
        }
        log_sum += (num / den).ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("references are non-empty");
    let bp = if c >= r { 0.0 } else { 1.0 - r as f64 / c as f64 };
    Ok((100.0 * (bp + log_sum / orders as f64).exp()).clamp(0.0, 100.0))
}

/// `100 − BLEU(candidate, [source])`.
pub fn novelty(candidate: &[TokenId], source: &[TokenId], cfg: &BleuConfig) -> Result<f64> {
    Ok(100.0 - bleu(candidate, &[source.to_vec()], cfg)?)
}

/// Mean negative log-probability of each context next to `text`.
pub fn contextual_cross_entropy<L: LanguageModel + ?Sized>(
    text: &[TokenId],
    contexts: &[TokenSeq],
    lm: &L,
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::EmptyInput("contexts"));
    }
    let mut total = 0.0;
    for c in contexts {
        total -= sequence_logprob(lm, c, text)?;
    }
    Ok(total / contexts.len() as f64)
}
