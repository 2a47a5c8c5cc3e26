//! Context ensembles and the reflective sampling distribution.
//!
//! A [`ReflectiveSampler`] combines one reverse-direction language model
//! conditioned on each context into a weighted product of experts that is
//! renormalized at every token:
//!
//! ```text
//! RD(t | partial) ∝ exp( Σ_i w_i · log LM(t | partial + inner + c_i) )
//! ```
//!
//! Right contexts pair with a backward model (generation right to left);
//! left contexts pair with a forward model.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{Direction, LanguageModel};
use crate::logspace::{floor_in_place, normalize_in_place, LOG_PROB_FLOOR};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{sample_sequence_with, NextTokenSource, NucleusParams};
use crate::vocab::{TokenId, TokenSeq};

/// Which side of the source text the contexts sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Direction of the model that decodes from contexts on this side.
    pub fn decoder_direction(self) -> Direction {
        match self {
            Side::Left => Direction::Forward,
            Side::Right => Direction::Backward,
        }
    }

    /// Direction of the model that generates contexts on this side.
    pub fn generator_direction(self) -> Direction {
        self.decoder_direction().reversed()
    }

    pub fn for_decoder(direction: Direction) -> Side {
        match direction {
            Direction::Forward => Side::Left,
            Direction::Backward => Side::Right,
        }
    }
}

const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEnsemble {
    contexts: Vec<TokenSeq>,
    weights: Vec<f64>,
    side: Side,
}

impl ContextEnsemble {
    pub fn new(contexts: Vec<TokenSeq>, weights: Vec<f64>, side: Side) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyInput("context ensemble"));
        }
        if contexts.len() != weights.len() {
            return Err(Error::invalid(
                "weights",
                format!("{} weights for {} contexts", weights.len(), contexts.len()),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid("weights", format!("sum to {sum}, not 1")));
        }
        Ok(ContextEnsemble { contexts, weights, side })
    }

    pub fn uniform(contexts: Vec<TokenSeq>, side: Side) -> Result<Self> {
        let n = contexts.len().max(1);
        Self::new(contexts, vec![1.0 / n as f64; n], side)
    }

    pub fn contexts(&self) -> &[TokenSeq] {
        &self.contexts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Token-normalized product of experts over one language model conditioned on
/// each context of an ensemble.
#[derive(Clone)]
pub struct ReflectiveSampler<'a> {
    ensemble: ContextEnsemble,
    lm: &'a dyn LanguageModel,
    floor: f64,
    separator: Option<TokenId>,
    candidates: Option<Arc<[TokenId]>>,
}

impl std::fmt::Debug for ReflectiveSampler<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReflectiveSampler")
            .field("ensemble", &self.ensemble)
            .field("direction", &self.lm.direction())
            .field("floor", &self.floor)
            .field("separator", &self.separator)
            .finish_non_exhaustive()
    }
}

impl<'a> ReflectiveSampler<'a> {
    pub fn new(ensemble: ContextEnsemble, lm: &'a dyn LanguageModel) -> Result<Self> {
        let expected = ensemble.side.decoder_direction();
        if lm.direction() != expected {
            return Err(Error::DirectionMismatch {
                expected,
                found: lm.direction(),
            });
        }
        for c in &ensemble.contexts {
            lm.vocab().validate(c)?;
        }
        Ok(ReflectiveSampler {
            ensemble,
            lm,
            floor: LOG_PROB_FLOOR,
            separator: None,
            candidates: None,
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Inserts `sep` between the generation and every context.
    pub fn with_separator(mut self, sep: Option<TokenId>) -> Self {
        self.separator = sep;
        self
    }

    /// Restricts every step to the given tokens; all others get zero mass.
    /// Useful for large vocabularies where the full normalizer is expensive.
    pub fn with_candidate_set(mut self, tokens: Option<Arc<[TokenId]>>) -> Self {
        self.candidates = tokens;
        self
    }

    pub fn ensemble(&self) -> &ContextEnsemble {
        &self.ensemble
    }

    pub fn lm(&self) -> &'a dyn LanguageModel {
        self.lm
    }

    pub fn direction(&self) -> Direction {
        self.lm.direction()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Logical-order history seen by one expert.
    pub(crate) fn expert_history(&self, history: &[TokenId], context: &[TokenId]) -> Vec<TokenId> {
        let sep = self.separator.as_slice();
        let mut h = Vec::with_capacity(history.len() + sep.len() + context.len());
        match self.direction() {
            Direction::Backward => {
                h.extend_from_slice(history);
                h.extend_from_slice(sep);
                h.extend_from_slice(context);
            }
            Direction::Forward => {
                h.extend_from_slice(context);
                h.extend_from_slice(sep);
                h.extend_from_slice(history);
            }
        }
        h
    }

    /// Floored log-probabilities of every expert with nonzero weight.
    pub(crate) fn expert_logprobs(&self, history: &[TokenId]) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut out = Vec::new();
        for (i, (c, &w)) in self.ensemble.contexts.iter().zip(&self.ensemble.weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut lp = self.lm.next_token_logprobs(&self.expert_history(history, c))?;
            floor_in_place(&mut lp, self.floor);
            out.push((i, lp));
        }
        Ok(out)
    }

    pub(crate) fn combine(&self, experts: &[(usize, Vec<f64>)], weights: &[f64]) -> Vec<f64> {
        let v = self.lm.vocab().len();
        let mut acc = vec![0.0; v];
        for (i, lp) in experts {
            let w = weights[*i];
            for (a, &l) in acc.iter_mut().zip(lp) {
                *a += w * l;
            }
        }
        if let Some(cands) = &self.candidates {
            let mut masked = vec![f64::NEG_INFINITY; v];
            for &t in cands.iter() {
                masked[t] = acc[t];
            }
            acc = masked;
        }
        normalize_in_place(&mut acc);
        acc
    }

    /// Next-token distribution given everything already fixed next to the
    /// position: `history` is `partial + inner` for right-to-left decoding and
    /// `inner + partial` for left-to-right.
    pub fn dist_for_history(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        self.lm.vocab().validate(history)?;
        let experts = self.expert_logprobs(history)?;
        Ok(self.combine(&experts, &self.ensemble.weights))
    }

    /// Distribution for the token adjacent to `partial` (the already generated
    /// suffix for right-to-left decoding, prefix for left-to-right), with
    /// `inner` fixed between the generation and the contexts.
    pub fn next_token_dist(&self, partial: &[TokenId], inner: &[TokenId]) -> Result<Vec<f64>> {
        let history = match self.direction() {
            Direction::Backward => [partial, inner].concat(),
            Direction::Forward => [inner, partial].concat(),
        };
        self.dist_for_history(&history)
    }

    /// Log-probability of `s` under the sampler, summed in its factorization
    /// order.
    pub fn sequence_logprob(&self, s: &[TokenId], inner: &[TokenId]) -> Result<f64> {
        self.lm.vocab().validate(s)?;
        let dir = self.direction();
        let order: Vec<usize> = match dir {
            Direction::Forward => (0..s.len()).collect(),
            Direction::Backward => (0..s.len()).rev().collect(),
        };
        let mut total = 0.0;
        for j in order {
            let done = match dir {
                Direction::Forward => &s[..j],
                Direction::Backward => &s[j + 1..],
            };
            total += self.dist_for_history(&dir.history(inner, done))?[s[j]];
        }
        Ok(total)
    }

    /// Draws `count` sequences. Sample `i` uses its own stream derived from
    /// `params.seed`, so results do not depend on evaluation order.
    pub fn sample(
        &self,
        inner: &[TokenId],
        params: &NucleusParams,
        count: usize,
    ) -> Result<Vec<TokenSeq>> {
        if count < 1 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(params.seed, "rd-sample", i as u64));
                sample_sequence_with(self, inner, params.p, params.max_len, &mut rng)
            })
            .collect()
    }
}

impl NextTokenSource for ReflectiveSampler<'_> {
    fn generation_direction(&self) -> Direction {
        self.direction()
    }

    fn stop_token(&self) -> TokenId {
        self.lm.vocab().eos()
    }

    fn next_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        self.dist_for_history(history)
    }
}
