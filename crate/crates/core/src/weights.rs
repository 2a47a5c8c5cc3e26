//! Learning context weights on the probability simplex.
//!
//! The objective is the reflective log-probability of the source text,
//!
//! ```text
//! J(w) = Σ_j [ Σ_i w_i a_ij(s_j) − log Σ_t exp(Σ_i w_i a_ij(t)) ]
//! ```
//!
//! with `a_ij(t)` the floored expert log-probability of token `t` at position
//! `j`. `J` is concave in `w`, so exponentiated-gradient ascent converges to
//! the simplex maximum and the Frank–Wolfe gap `max_i g_i − w·g` bounds the
//! remaining suboptimality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ContextEnsemble, ReflectiveSampler, Side};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::logspace::log_sum_exp;
use crate::vocab::{TokenId, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLearnConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop once the certified gap to the optimum falls below this (nats).
    pub convergence_tol: f64,
    pub k_c: usize,
}

impl Default for WeightLearnConfig {
    fn default() -> Self {
        WeightLearnConfig {
            max_iters: 200,
            step_size: 0.5,
            convergence_tol: 1e-4,
            k_c: 6,
        }
    }
}

impl WeightLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", "must be positive"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::invalid("convergence_tol", "must be positive"));
        }
        if self.k_c < 1 {
            return Err(Error::invalid("k_c", "must be at least 1"));
        }
        Ok(())
    }
}

struct Position {
    target: TokenId,
    /// `expert_logp[i][t]`
    expert_logp: Vec<Vec<f64>>,
}

/// The weight-learning objective with all expert distributions along the
/// source precomputed.
pub struct WeightObjective {
    positions: Vec<Position>,
    n_experts: usize,
}

impl WeightObjective {
    pub fn new(sampler: &ReflectiveSampler<'_>, s_src: &[TokenId]) -> Result<Self> {
        let lm = sampler.lm();
        lm.vocab().validate(s_src)?;
        let n = sampler.ensemble().len();
        let dir = sampler.direction();
        // Factorization order, so sums match a mirrored problem exactly.
        let order: Vec<usize> = match dir {
            crate::lm::Direction::Forward => (0..s_src.len()).collect(),
            crate::lm::Direction::Backward => (0..s_src.len()).rev().collect(),
        };
        let positions = order
            .into_par_iter()
            .map(|j| {
                let done = match dir {
                    crate::lm::Direction::Forward => &s_src[..j],
                    crate::lm::Direction::Backward => &s_src[j + 1..],
                };
                let history = dir.history(&[], done);
                let mut expert_logp = Vec::with_capacity(n);
                for c in sampler.ensemble().contexts() {
                    let mut lp = lm.next_token_logprobs(&sampler.expert_history(&history, c))?;
                    crate::logspace::floor_in_place(&mut lp, sampler.floor());
                    expert_logp.push(lp);
                }
                Ok(Position { target: s_src[j], expert_logp })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightObjective { positions, n_experts: n })
    }

    pub fn n_experts(&self) -> usize {
        self.n_experts
    }

    fn position_terms(&self, pos: &Position, w: &[f64]) -> (f64, Vec<f64>) {
        let v = pos.expert_logp[0].len();
        let mut mix = vec![0.0; v];
        for (lp, &wi) in pos.expert_logp.iter().zip(w) {
            if wi != 0.0 {
                for (m, &l) in mix.iter_mut().zip(lp) {
                    *m += wi * l;
                }
            }
        }
        let z = log_sum_exp(&mix);
        let value = mix[pos.target] - z;
        let q: Vec<f64> = mix.iter().map(|&m| (m - z).exp()).collect();
        let grad = pos
            .expert_logp
            .iter()
            .map(|lp| {
                let expected: f64 = q.iter().zip(lp).map(|(qi, l)| qi * l).sum();
                lp[pos.target] - expected
            })
            .collect();
        (value, grad)
    }

    /// Objective and its gradient. Defined for any real `w`, not only the
    /// simplex, so finite differences can probe it freely.
    pub fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(w.len(), self.n_experts);
        let terms: Vec<(f64, Vec<f64>)> = self
            .positions
            .par_iter()
            .map(|p| self.position_terms(p, w))
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n_experts];
        for (v, g) in terms {
            value += v;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        (value, grad)
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.value_and_gradient(w).0
    }

    /// Per-expert objective with all weight on one context.
    fn single_expert_value(&self, i: usize) -> f64 {
        self.positions
            .iter()
            .map(|p| p.expert_logp[i][p.target] - log_sum_exp(&p.expert_logp[i]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightIterate {
    pub iteration: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub gap: f64,
    pub step: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTrace {
    pub iterates: Vec<WeightIterate>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LearnedWeights {
    pub ensemble: ContextEnsemble,
    pub objective: f64,
    pub trace: WeightTrace,
}

fn frank_wolfe_gap(w: &[f64], g: &[f64]) -> f64 {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    (max - avg).max(0.0)
}

fn eg_step(w: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut next: Vec<f64> = w
        .iter()
        .zip(g)
        .map(|(&wi, &gi)| wi * (step * (gi - max)).exp())
        .collect();
    let z: f64 = next.iter().sum();
    for x in next.iter_mut() {
        *x /= z;
    }
    next
}

const MAX_HALVINGS: usize = 40;

/// Fits simplex weights for `contexts` maximizing the reflective probability
/// of `s_src` under `lm`, which must decode from `side`.
pub fn learn_weights(
    contexts: Vec<TokenSeq>,
    side: Side,
    s_src: &[TokenId],
    lm: &dyn LanguageModel,
    cfg: &WeightLearnConfig,
) -> Result<LearnedWeights> {
    learn_weights_with(contexts, side, s_src, lm, cfg, |s| s)
}

/// As [`learn_weights`], with a hook to configure the sampler (floor,
/// separator) used for the objective.
pub fn learn_weights_with<'a>(
    contexts: Vec<TokenSeq>,
    side: Side,
    s_src: &[TokenId],
    lm: &'a dyn LanguageModel,
    cfg: &WeightLearnConfig,
    configure: impl FnOnce(ReflectiveSampler<'a>) -> ReflectiveSampler<'a>,
) -> Result<LearnedWeights> {
    cfg.validate()?;
    let uniform = ContextEnsemble::uniform(contexts, side)?;
    let sampler = configure(ReflectiveSampler::new(uniform.clone(), lm)?);
    let objective = WeightObjective::new(&sampler, s_src)?;
    let n = objective.n_experts();
    for i in 0..n {
        if !objective.single_expert_value(i).is_finite() {
            return Err(Error::NonFiniteObjective { context: i });
        }
    }

    let mut w = uniform.weights().to_vec();
    let (mut f, mut g) = objective.value_and_gradient(&w);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { context: 0 });
    }
    let mut gap = frank_wolfe_gap(&w, &g);
    let mut step = cfg.step_size;
    let mut trace = WeightTrace {
        iterates: vec![WeightIterate {
            iteration: 0,
            objective: f,
            best_objective: f,
            gap,
            step,
            weights: w.clone(),
        }],
        converged: n == 1,
    };

    if n > 1 {
        'outer: for iteration in 1..=cfg.max_iters {
            if gap <= cfg.convergence_tol {
                trace.converged = true;
                break;
            }
            let mut halvings = 0;
            let (next_w, next_f, next_g) = loop {
                let cand = eg_step(&w, &g, step);
                let (cf, cg) = objective.value_and_gradient(&cand);
                if cf.is_finite() && cf > f {
                    break (cand, cf, cg);
                }
                step *= 0.5;
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    // No ascent direction left at machine precision.
                    trace.converged = true;
                    break 'outer;
                }
            };
            w = next_w;
            f = next_f;
            g = next_g;
            gap = frank_wolfe_gap(&w, &g);
            trace.iterates.push(WeightIterate {
                iteration,
                objective: f,
                best_objective: f,
                gap,
                step,
                weights: w.clone(),
            });
            if halvings == 0 {
                step *= 1.5;
            }
        }
        if !trace.converged && gap <= cfg.convergence_tol {
            trace.converged = true;
        }
    }

    Ok(LearnedWeights {
        ensemble: ContextEnsemble::new(uniform.contexts().to_vec(), w, side)?,
        objective: f,
        trace,
    })
}

/// Keeps the `k_c` heaviest contexts (ties to the lower index), preserving
/// their original order, and renormalizes.
pub fn prune_weights(ensemble: &ContextEnsemble, k_c: usize) -> Result<ContextEnsemble> {
    if k_c < 1 {
        return Err(Error::invalid("k_c", "must be at least 1"));
    }
    if ensemble.len() <= k_c {
        return Ok(ensemble.clone());
    }
    let w = ensemble.weights();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut keep = order[..k_c].to_vec();
    keep.sort_unstable();
    let total: f64 = keep.iter().map(|&i| w[i]).sum();
    let (contexts, weights) = if total > 0.0 {
        keep.iter()
            .map(|&i| (ensemble.contexts()[i].clone(), w[i] / total))
            .unzip()
    } else {
        keep.iter()
            .map(|&i| (ensemble.contexts()[i].clone(), 1.0 / k_c as f64))
            .unzip()
    };
    ContextEnsemble::new(contexts, weights, ensemble.side())
}
