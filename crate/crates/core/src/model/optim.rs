use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Linear warmup followed by cosine decay to `min_factor · lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub min_factor: f64,
}

impl LrSchedule {
    pub fn factor(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_factor
            + (1.0 - self.min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    step: usize,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T], lr_factor: f64) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = T::of(c.lr * lr_factor * bc2.sqrt() / bc1);
        let eps = T::of(c.eps * bc2.sqrt());
        let wd = T::of(c.lr * lr_factor * c.weight_decay);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            params[i] -= lr * self.m[i] / (self.v[i].sqrt() + eps) + wd * params[i];
        }
    }
}

/// Rescales `grad` to global L2 norm at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm<T: Real>(grad: &mut [T], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
