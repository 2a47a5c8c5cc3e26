//! Numerically stable log-space helpers.

/// Default lower bound applied to log-probabilities before they are combined.
pub const LOG_PROB_FLOOR: f64 = -60.0;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Shifts `xs` in place so that `log_sum_exp(xs) == 0`.
pub fn normalize_in_place(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x -= z;
    }
}

pub fn floor_in_place(xs: &mut [f64], floor: f64) {
    for x in xs.iter_mut() {
        if *x < floor || x.is_nan() {
            *x = floor;
        }
    }
}

/// Shannon entropy (nats) of a normalized log-probability vector.
pub fn entropy(logp: &[f64]) -> f64 {
    logp.iter()
        .filter(|&&l| l > f64::NEG_INFINITY)
        .map(|&l| -l.exp() * l)
        .sum::<f64>()
        .max(0.0)
}
