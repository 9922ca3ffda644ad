use fixedbitset::FixedBitSet;

use super::{ModelError, Real};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Per-row layer norm. Stores `x̂` and `1/σ` for the backward pass.
pub(crate) fn layer_norm<T: Real>(
    x: &[T],
    rows: usize,
    gamma: &[T],
    beta: &[T],
    y: &mut [T],
    xhat: &mut [T],
    rstd: &mut [T],
) {
    let d = gamma.len();
    let eps = T::of(LN_EPS);
    let inv_d = T::one() / T::of(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<T>() * inv_d;
        let var = xr.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (xr[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = h * gamma[i] + beta[i];
        }
    }
}

/// Accumulates `dx` (when `acc`) or overwrites it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    gamma: &[T],
    rows: usize,
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: &mut [T],
    acc: bool,
) {
    let d = gamma.len();
    let inv_d = T::one() / T::of(d as f64);
    for r in 0..rows {
        let (dyr, xr) = (&dy[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
        let mut s1 = T::zero();
        let mut s2 = T::zero();
        for i in 0..d {
            let g = dyr[i] * gamma[i];
            s1 += g;
            s2 += g * xr[i];
            dgamma[i] += dyr[i] * xr[i];
            dbeta[i] += dyr[i];
        }
        s1 *= inv_d;
        s2 *= inv_d;
        for i in 0..d {
            let v = rstd[r] * (dyr[i] * gamma[i] - s1 - xr[i] * s2);
            if acc {
                dx[r * d + i] += v;
            } else {
                dx[r * d + i] = v;
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU, evaluated as `u·σ(2z)` since
/// `½(1 + tanh z) = σ(2z)`.
pub fn gelu<T: Real>(u: T) -> T {
    let z = T::of(GELU_C) * (u + T::of(GELU_A) * u * u * u);
    u * (T::one() / (T::one() + (-(z + z)).exp()))
}

/// `(gelu(u), gelu'(u))` from a single exponential.
pub(crate) fn gelu_with_grad<T: Real>(u: T) -> (T, T) {
    let z = T::of(GELU_C) * (u + T::of(GELU_A) * u * u * u);
    let s = T::one() / (T::one() + (-(z + z)).exp());
    let d = s + T::of(2.0)
        * u
        * s
        * (T::one() - s)
        * T::of(GELU_C)
        * (T::one() + T::of(3.0 * GELU_A) * u * u);
    (u * s, d)
}

/// Disabled entries become `-∞`; enabled entries are untouched.
pub fn apply_mask<T: Real>(logits: &mut [T], mask: &FixedBitSet) -> Result<(), ModelError> {
    if mask.count_ones(..) == 0 {
        return Err(ModelError::EmptyMask(0));
    }
    for (i, l) in logits.iter_mut().enumerate() {
        if !mask.contains(i) {
            *l = T::neg_infinity();
        }
    }
    Ok(())
}

/// `log softmax` restricted to `enabled`; returns the log-normalizer.
pub fn log_softmax_masked<T: Real>(logits: &[T], enabled: &[u32]) -> T {
    let mut m = T::neg_infinity();
    for &i in enabled {
        m = m.max(logits[i as usize]);
    }
    let s: T = enabled
        .iter()
        .map(|&i| (logits[i as usize] - m).exp())
        .sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        // tanh-approximation values
        assert!((gelu(1.0f64) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!((gelu(-1.0f64) + 0.158_808_009_392_522_8).abs() < 1e-12);
        for u in [-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            let (g, dg) = gelu_with_grad(u);
            assert_eq!(g, gelu(u));
            assert!((dg - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn mask_identity_and_single_bit() {
        let mut l = vec![0.3f64, -1.0, 2.0];
        let mut all = FixedBitSet::with_capacity(3);
        all.insert_range(..);
        apply_mask(&mut l, &all).unwrap();
        assert_eq!(l, vec![0.3, -1.0, 2.0]);
        let mut one = FixedBitSet::with_capacity(3);
        one.insert(1);
        apply_mask(&mut l, &one).unwrap();
        let z = log_softmax_masked(&l, &[0, 1, 2]);
        let p: Vec<f64> = l.iter().map(|x| (x - z).exp()).collect();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        assert!(apply_mask(&mut l, &FixedBitSet::with_capacity(3)).is_err());
    }

    #[test]
    fn uniform_cross_entropy_is_log_vocab() {
        let l = vec![0.7f64; 50];
        let all: Vec<u32> = (0..50).collect();
        let ce = log_softmax_masked(&l, &all) - l[3];
        assert!((ce - 50f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_backward_matches_differences() {
        let d = 5;
        let x: Vec<f64> = (0..2 * d).map(|i| (i as f64 * 0.9).sin() * 2.0).collect();
        let g: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.1).collect();
        let b = vec![0.1; d];
        let w: Vec<f64> = (0..2 * d).map(|i| (i as f64 * 1.7).cos()).collect();
        let f = |x: &[f64]| {
            let (mut y, mut xh, mut rs) = (vec![0.0; 2 * d], vec![0.0; 2 * d], vec![0.0; 2]);
            layer_norm(x, 2, &g, &b, &mut y, &mut xh, &mut rs);
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (mut y, mut xh, mut rs) = (vec![0.0; 2 * d], vec![0.0; 2 * d], vec![0.0; 2]);
        layer_norm(&x, 2, &g, &b, &mut y, &mut xh, &mut rs);
        let (mut dg, mut db, mut dx) = (vec![0.0; d], vec![0.0; d], vec![0.0; 2 * d]);
        layer_norm_backward(&w, &xh, &rs, &g, 2, &mut dg, &mut db, &mut dx, false);
        for i in 0..2 * d {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7, "{i}: {fd} vs {}", dx[i]);
        }
    }
}
