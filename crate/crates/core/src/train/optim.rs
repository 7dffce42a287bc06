//! Plain SGD and Adam updates on flat parameter vectors.

use crate::error::{shape, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// `θ ← θ − (γ/ℳ) Σ_m g_m` for a batch of per-sample gradients.
pub fn sgd_step(theta: &mut [f64], grads: &[Vec<f64>], lr: f64) -> Result<()> {
    if grads.is_empty() {
        return Ok(());
    }
    if let Some(g) = grads.iter().find(|g| g.len() != theta.len()) {
        return shape(format!("gradient of length {} for {} parameters", g.len(), theta.len()));
    }
    let scale = lr / grads.len() as f64;
    for (i, th) in theta.iter_mut().enumerate() {
        let s: f64 = grads.iter().map(|g| g[i]).sum();
        *th -= scale * s;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update with an already batch-averaged gradient.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if state.m.len() != theta.len() || grad.len() != theta.len() {
        return shape(format!("Adam state {} / gradient {} / parameters {}", state.m.len(), grad.len(), theta.len()));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..theta.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        theta[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_zero_rate_and_single_sample() {
        let mut th = vec![1.0, -2.0];
        sgd_step(&mut th, &[vec![3.0, 4.0]], 0.0).unwrap();
        assert_eq!(th, vec![1.0, -2.0]);
        sgd_step(&mut th, &[vec![3.0, 4.0]], 0.1).unwrap();
        assert_eq!(th, vec![1.0 - 0.1 * 3.0, -2.0 - 0.1 * 4.0]);
    }

    #[test]
    fn sgd_batch_equals_averaged_gradient() {
        let mut a = vec![0.5, 0.25];
        let mut b = a.clone();
        sgd_step(&mut a, &[vec![1.0, 2.0], vec![3.0, -6.0]], 0.5).unwrap();
        sgd_step(&mut b, &[vec![2.0, -2.0]], 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sgd_shape_error() {
        assert!(sgd_step(&mut [0.0], &[vec![1.0, 2.0]], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_is_signed_rate() {
        let g = vec![1e-3, -0.5, 20.0];
        let mut th = vec![0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut st, &mut th, &g, 0.01).unwrap();
        for (t, gi) in th.iter().zip(&g) {
            assert!((t + 0.01 * gi.signum()).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut th = vec![0.3, -0.7];
        let mut st = AdamState::new(2);
        for _ in 0..50 {
            adam_step(&mut st, &mut th, &[0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(th, vec![0.3, -0.7]);
    }

    #[test]
    fn adam_two_steps_match_recurrence() {
        let g = 0.37;
        let lr = 0.05;
        let mut th = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut st, &mut th, &[g], lr).unwrap();
        adam_step(&mut st, &mut th, &[g], lr).unwrap();
        let m1 = 0.1 * g;
        let v1 = 0.001 * g * g;
        let x1 = 1.0 - lr * (m1 / 0.1) / ((v1 / 0.001).sqrt() + 1e-8);
        let m2 = 0.9 * m1 + 0.1 * g;
        let v2 = 0.999 * v1 + 0.001 * g * g;
        let x2 = x1 - lr * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999 * 0.999)).sqrt() + 1e-8);
        assert!((th[0] - x2).abs() < 1e-12);
    }
}
