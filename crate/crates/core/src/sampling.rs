//! Nucleus truncation, seeded autoregressive sampling and entropy calibration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{Direction, LanguageModel};
use crate::logspace::{entropy, LOG_PROB_FLOOR};
use crate::rng::{rng_from_seed, StreamRng};
use crate::vocab::{TokenId, TokenSeq};

/// Anything that yields a next-token distribution for a logical-order
/// history and generates in a fixed direction.
pub trait NextTokenSource: Sync {
    fn generation_direction(&self) -> Direction;

    /// Token that stops generation.
    fn stop_token(&self) -> TokenId;

    fn next_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>>;
}

impl<L: LanguageModel + ?Sized> NextTokenSource for L {
    fn generation_direction(&self) -> Direction {
        self.direction()
    }

    fn stop_token(&self) -> TokenId {
        self.vocab().eos()
    }

    fn next_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        self.next_token_logprobs(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NucleusParams {
    pub p: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl NucleusParams {
    pub fn new(p: f64, max_len: usize, seed: u64) -> Result<Self> {
        check_p(p)?;
        if max_len < 1 {
            return Err(Error::invalid("max_len", "must be at least 1"));
        }
        Ok(NucleusParams { p, max_len, seed })
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("p", format!("{p} is outside (0, 1]")))
    }
}

/// The kept nucleus as `(token, probability)` pairs in descending probability
/// order (ties by ascending id), with probabilities renormalized.
pub fn nucleus_support(logp: &[f64], p: f64) -> Result<Vec<(TokenId, f64)>> {
    check_p(p)?;
    let mut order: Vec<TokenId> = (0..logp.len()).collect();
    order.sort_by(|&a, &b| logp[b].total_cmp(&logp[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for id in order {
        let prob = logp[id].exp();
        if prob <= 0.0 && !kept.is_empty() {
            break;
        }
        kept.push((id, prob));
        mass += prob;
        // Small slack so that exact boundaries like 0.5 + 0.5 >= 0.5 survive rounding.
        if mass >= p - 1e-12 {
            break;
        }
    }
    if mass > 0.0 {
        for (_, prob) in kept.iter_mut() {
            *prob /= mass;
        }
    }
    Ok(kept)
}

/// Top-p truncation of a normalized log-probability vector. Excluded entries
/// are set to [`LOG_PROB_FLOOR`].
pub fn nucleus_filter(logp: &[f64], p: f64) -> Result<Vec<f64>> {
    let kept = nucleus_support(logp, p)?;
    let mut out = vec![LOG_PROB_FLOOR; logp.len()];
    for (id, prob) in kept {
        out[id] = prob.ln();
    }
    Ok(out)
}

fn draw(kept: &[(TokenId, f64)], rng: &mut StreamRng) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(id, prob) in kept {
        acc += prob;
        if u < acc {
            return id;
        }
    }
    kept.last().map(|&(id, _)| id).expect("nucleus is never empty")
}

/// Samples up to `max_len` tokens next to `conditioning`, stopping before the
/// source's stop token. Output is in logical order.
pub fn sample_sequence_with<S: NextTokenSource + ?Sized>(
    source: &S,
    conditioning: &[TokenId],
    p: f64,
    max_len: usize,
    rng: &mut StreamRng,
) -> Result<TokenSeq> {
    let dir = source.generation_direction();
    // Generated tokens kept in generation order; reversed at the end for backward.
    let mut generated: Vec<TokenId> = Vec::with_capacity(max_len);
    let mut history = conditioning.to_vec();
    for _ in 0..max_len {
        let logp = source.next_logprobs(&history)?;
        let kept = nucleus_support(&logp, p)?;
        let tok = draw(&kept, rng);
        if tok == source.stop_token() {
            break;
        }
        generated.push(tok);
        match dir {
            Direction::Forward => history.push(tok),
            Direction::Backward => history.insert(0, tok),
        }
    }
    if dir == Direction::Backward {
        generated.reverse();
    }
    Ok(generated)
}

pub fn sample_sequence<S: NextTokenSource + ?Sized>(
    source: &S,
    conditioning: &[TokenId],
    params: &NucleusParams,
) -> Result<TokenSeq> {
    let mut rng = rng_from_seed(params.seed);
    sample_sequence_with(source, conditioning, params.p, params.max_len, &mut rng)
}

/// Teacher-forced next-token distributions along `s`, in the source's
/// factorization order.
pub fn teacher_forced_dists<S: NextTokenSource + ?Sized>(
    source: &S,
    s: &[TokenId],
    conditioning: &[TokenId],
) -> Result<Vec<Vec<f64>>> {
    let dir = source.generation_direction();
    let positions: Vec<usize> = match dir {
        Direction::Forward => (0..s.len()).collect(),
        Direction::Backward => (0..s.len()).rev().collect(),
    };
    positions
        .into_iter()
        .map(|j| {
            let done = match dir {
                Direction::Forward => &s[..j],
                Direction::Backward => &s[j + 1..],
            };
            source.next_logprobs(&dir.history(conditioning, done))
        })
        .collect()
}

fn truncated_entropy_sum(dists: &[Vec<f64>], p: f64) -> Result<f64> {
    let mut total = 0.0;
    for d in dists {
        let kept = nucleus_support(d, p)?;
        total += kept
            .iter()
            .filter(|&&(_, q)| q > 0.0)
            .map(|&(_, q)| -q * q.ln())
            .sum::<f64>();
    }
    Ok(total.max(0.0))
}

/// Sum over positions of `s` of the entropy of the nucleus-truncated
/// distribution, with teacher forcing on `s`.
pub fn estimate_sequence_entropy<S: NextTokenSource + ?Sized>(
    source: &S,
    s: &[TokenId],
    conditioning: &[TokenId],
    p: f64,
) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptyInput("entropy source sequence"));
    }
    check_p(p)?;
    truncated_entropy_sum(&teacher_forced_dists(source, s, conditioning)?, p)
}

/// Untruncated summed entropy, for reference.
pub fn full_sequence_entropy(dists: &[Vec<f64>]) -> f64 {
    dists.iter().map(|d| entropy(d)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTarget {
    pub h_target: f64,
    pub tolerance: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub max_iters: usize,
}

impl EntropyTarget {
    pub fn new(h_target: f64) -> Self {
        EntropyTarget {
            h_target,
            tolerance: 0.05,
            p_min: 1e-6,
            p_max: 1.0,
            max_iters: 40,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_target >= 0.0 && self.h_target.is_finite()) {
            return Err(Error::invalid("h_target", "must be a finite value >= 0"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max && self.p_max <= 1.0) {
            return Err(Error::invalid("p bounds", "need 0 < p_min <= p_max <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    /// Entropy at `p` is within tolerance of the target.
    Within,
    /// Target is below what the smallest `p` gives.
    LowerBound,
    /// Target is above what `p = p_max` gives.
    UpperBound,
    /// The entropy curve jumps over the tolerance band; `p` is the closer side.
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub p: f64,
    pub entropy: f64,
    pub status: CalibrationStatus,
}

impl Calibration {
    pub fn is_flagged(&self) -> bool {
        self.status != CalibrationStatus::Within
    }
}

/// Bisection on `p` so that the summed truncated entropy along `s` hits the
/// target.
pub fn calibrate_p<S: NextTokenSource + ?Sized>(
    source: &S,
    s: &[TokenId],
    conditioning: &[TokenId],
    target: &EntropyTarget,
) -> Result<Calibration> {
    target.validate()?;
    if s.is_empty() {
        return Err(Error::EmptyInput("entropy source sequence"));
    }
    let dists = teacher_forced_dists(source, s, conditioning)?;
    calibrate_on_dists(&dists, target)
}

pub fn calibrate_on_dists(dists: &[Vec<f64>], target: &EntropyTarget) -> Result<Calibration> {
    let h = |p: f64| truncated_entropy_sum(dists, p);
    let tol = target.tolerance;
    let goal = target.h_target;
    let within = |e: f64| (e - goal).abs() <= tol;

    let (mut lo, mut hi) = (target.p_min, target.p_max);
    let e_hi = h(hi)?;
    if e_hi <= goal + tol {
        let status = if within(e_hi) {
            CalibrationStatus::Within
        } else {
            CalibrationStatus::UpperBound
        };
        return Ok(Calibration { p: hi, entropy: e_hi, status });
    }
    let e_lo = h(lo)?;
    if e_lo >= goal - tol {
        let status = if within(e_lo) {
            CalibrationStatus::Within
        } else {
            CalibrationStatus::LowerBound
        };
        return Ok(Calibration { p: lo, entropy: e_lo, status });
    }
    // Invariant: h(lo) < goal - tol and h(hi) > goal + tol.
    let (mut e_lo, mut e_hi) = (e_lo, e_hi);
    for _ in 0..target.max_iters {
        let mid = 0.5 * (lo + hi);
        let e = h(mid)?;
        if within(e) {
            return Ok(Calibration { p: mid, entropy: e, status: CalibrationStatus::Within });
        }
        if e < goal {
            lo = mid;
            e_lo = e;
        } else {
            hi = mid;
            e_hi = e;
        }
    }
    let (p, entropy) = if goal - e_lo <= e_hi - goal { (lo, e_lo) } else { (hi, e_hi) };
    Ok(Calibration { p, entropy, status: CalibrationStatus::Gap })
}
