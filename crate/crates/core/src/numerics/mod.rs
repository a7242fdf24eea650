//! Log-space arithmetic, dense matrices, seeded randomness and the central
//! finite-difference gradient oracle.
//!
//! All probabilistic quantities in this crate are natural-log values; the
//! dynamic programs never leave log space.

mod matrix;
mod rng;

pub use matrix::RealMatrix;
pub use rng::{SeededRng, RNG_ALGORITHM};

use crate::error::{Error, Result};

/// Log-probability (or unnormalized log-score). `-inf` is a valid value.
pub type LogProb = f64;

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// `log(exp(a) + exp(b))`, exact for `-inf` operands.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(vᵢ)` with max-shift stabilization.
///
/// Returns `-inf` iff every input is `-inf`.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyReduction);
    }
    Ok(logsumexp_nonempty(values))
}

#[inline]
pub(crate) fn logsumexp_nonempty(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-softmax of a score vector.
pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyReduction);
    }
    if let Some(v) = scores.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
        return Err(Error::NonFinite(format!("log_softmax input {v}")));
    }
    let mut out = scores.to_vec();
    log_softmax_in_place(&mut out);
    Ok(out)
}

/// In-place log-softmax for trusted (finite) inputs.
#[inline]
pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let norm = logsumexp_nonempty(row);
    for v in row.iter_mut() {
        *v -= norm;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Central-difference gradient of `f` at `x`.
///
/// Fails with the offending coordinate if any evaluation is not finite.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() {
            return Err(Error::NonFiniteAt { coordinate: i, value: plus });
        }
        if !minus.is_finite() {
            return Err(Error::NonFiniteAt { coordinate: i, value: minus });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest relative error between two gradients, with the denominator
/// floored at one: `|a - b| / max(1, |a|, |b|)`.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
