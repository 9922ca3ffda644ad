//! Gaussian-mixture density over the next standardized number.

use super::Real;

/// `ln σ² ≥ -13.8`, i.e. `σ² ≳ 1e-6`.
pub const LOG_VAR_FLOOR: f64 = -13.8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct MogOutput {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub log_vars: Vec<f64>,
}

/// Splits a `3K` projection into softmax weights, means and floored
/// log-variances.
pub fn mog_params<T: Real>(raw: &[T]) -> MogOutput {
    let k = raw.len() / 3;
    let logits: Vec<f64> = raw[..k].iter().map(|x| x.f64()).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    MogOutput {
        weights: e.iter().map(|x| x / s).collect(),
        means: raw[k..2 * k].iter().map(|x| x.f64()).collect(),
        log_vars: raw[2 * k..]
            .iter()
            .map(|x| x.f64().max(LOG_VAR_FLOOR))
            .collect(),
    }
}

/// `-ln Σ_j π_j N(x; μ_j, σ_j²)` through log-sum-exp.
pub fn mog_nll(out: &MogOutput, x: f64) -> f64 {
    let terms: Vec<f64> = (0..out.weights.len())
        .map(|j| {
            let lv = out.log_vars[j];
            let z = x - out.means[j];
            out.weights[j].ln() - 0.5 * (LN_2PI + lv + z * z / lv.exp())
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    -(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
}

/// NLL and its gradient with respect to the raw `3K` projection, in `T`.
pub fn mog_nll_grad<T: Real>(raw: &[T], x: T, grad: &mut [T]) -> T {
    let k = raw.len() / 3;
    let half = T::of(0.5);
    let floor = T::of(LOG_VAR_FLOOR);
    let lmax = raw[..k].iter().copied().fold(T::neg_infinity(), T::max);
    let lse = lmax + raw[..k].iter().map(|l| (*l - lmax).exp()).sum::<T>().ln();
    let mut terms = vec![T::zero(); k];
    for j in 0..k {
        let lv = raw[2 * k + j].max(floor);
        let z = x - raw[k + j];
        terms[j] = (raw[j] - lse) - half * (T::of(LN_2PI) + lv + z * z / lv.exp());
    }
    let tmax = terms.iter().copied().fold(T::neg_infinity(), T::max);
    let tlse = tmax + terms.iter().map(|t| (*t - tmax).exp()).sum::<T>().ln();
    for j in 0..k {
        let r = (terms[j] - tlse).exp();
        let pi = (raw[j] - lse).exp();
        let clamped = raw[2 * k + j] < floor;
        let lv = raw[2 * k + j].max(floor);
        let var = lv.exp();
        let z = x - raw[k + j];
        grad[j] = pi - r;
        grad[k + j] = -r * z / var;
        grad[2 * k + j] = if clamped {
            T::zero()
        } else {
            r * half * (T::one() - z * z / var)
        };
    }
    -tlse
}
