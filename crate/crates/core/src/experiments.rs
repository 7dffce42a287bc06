//! Small end-to-end drivers for the physics-informed and stochastic methods:
//! a Kolmogorov regression for the heat equation, a PINN for the Laplace
//! equation and a deep BSDE for the backward heat equation.

use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::error::{invalid, Result};
use crate::residual::pinn::{BoxDomain, BvpProblem};
use crate::rng::{gauss_sample, RngState};
use crate::solvers::heat::{heat_exact, HeatData, KolmogorovSpec, KolmogorovVariant};
use crate::stochastic::bsde::{BsdeBatch, BsdeControls};
use crate::stochastic::kolmogorov::{KolmogorovBatch, KolmogorovModel, XiLaw};
use crate::stochastic::sde::SdeSpec;
use crate::train::optim::{adam_step, AdamState};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Adam with the rate decaying geometrically from `lr` to `lr_final`.
/// `f(step, θ)` returns the minibatch loss and gradient. Returns the losses.
pub fn adam_minimize<F>(theta: &mut [f64], steps: usize, lr: f64, lr_final: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(lr > 0.0 && lr_final > 0.0) {
        return invalid("learning rates must be positive");
    }
    let mut st = AdamState::new(theta.len());
    let mut losses = Vec::with_capacity(steps);
    for n in 0..steps {
        let (l, g) = f(n, theta)?;
        if !l.is_finite() {
            return Err(crate::error::Error::Numerical(format!("loss became {l} at step {n}")));
        }
        let rate = lr * (lr_final / lr).powf(n as f64 / steps.max(1) as f64);
        adam_step(&mut st, theta, &g, rate)?;
        losses.push(l);
    }
    Ok(losses)
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// `∂u/∂t = ρΔu`, `u(0) = ‖x‖²`, learned at time `T` on `[lo, hi]^d`. The
/// samples `ξ` are uniform on the box widened by `margin`, which keeps the
/// fit near the faces as good as inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KolmogorovConfig {
    pub dim: usize,
    pub rho: f64,
    pub horizon: f64,
    pub lo: f64,
    pub hi: f64,
    pub margin: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub eval_points: usize,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for KolmogorovConfig {
    fn default() -> Self {
        KolmogorovConfig {
            dim: 1,
            rho: 0.5,
            horizon: 1.0,
            lo: -2.0,
            hi: 2.0,
            margin: 0.5,
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            steps: 5000,
            batch: 1024,
            lr: 1e-2,
            lr_final: 1e-4,
            eval_points: 1001,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `‖v − u‖ / ‖u‖` in L² over the evaluation points.
    pub relative_l2_error: f64,
    /// `‖v − u‖` in L² normalized by the domain measure.
    pub l2_error: f64,
    pub final_loss: f64,
    pub params: Vec<f64>,
}

fn report(pairs: impl Iterator<Item = Result<(f64, f64)>>, final_loss: f64, params: Vec<f64>) -> Result<FitReport> {
    let (mut e, mut n, mut k) = (0.0, 0.0, 0usize);
    for p in pairs {
        let (v, u) = p?;
        e += (v - u) * (v - u);
        n += u * u;
        k += 1;
    }
    let k = k.max(1) as f64;
    Ok(FitReport { relative_l2_error: (e / n.max(f64::MIN_POSITIVE)).sqrt(), l2_error: (e / k).sqrt(), final_loss, params })
}

/// Evaluation points: a uniform grid in one dimension, seeded uniform
/// samples otherwise.
fn eval_points(dim: usize, lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..n).map(|i| vec![lo[0] + (hi[0] - lo[0]) * i as f64 / (n.max(2) - 1) as f64]).collect();
    }
    let mut r = RngState::new(seed).split(99);
    (0..n).map(|_| (0..dim).map(|j| lo[j] + (hi[j] - lo[j]) * r.next_f64()).collect()).collect()
}

pub fn run_kolmogorov(cfg: &KolmogorovConfig) -> Result<FitReport> {
    let spec = KolmogorovSpec::new(cfg.dim, cfg.horizon, cfg.rho, KolmogorovVariant::Terminal)?;
    let model = KolmogorovModel::new(spec.clone(), MlpArchitecture::new(widths(cfg.dim, &cfg.hidden, 1), cfg.activation)?)?;
    let root = RngState::new(cfg.seed);
    let mut theta = model.net.init(&mut root.split(0)).values;
    let mut data = root.split(1);
    if !(cfg.margin >= 0.0) {
        return invalid("sampling margin must be nonnegative");
    }
    let law = XiLaw::Uniform { lo: cfg.lo - cfg.margin, hi: cfg.hi + cfg.margin };
    let phi = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let losses = adam_minimize(&mut theta, cfg.steps, cfg.lr, cfg.lr_final, |_, th| {
        let b = KolmogorovBatch::sample(&spec, law, cfg.batch, &mut data)?;
        model.loss_and_grad(th, phi, &b)
    })?;
    let pts = eval_points(cfg.dim, &vec![cfg.lo; cfg.dim], &vec![cfg.hi; cfg.dim], cfg.eval_points, cfg.seed);
    let pairs = pts.iter().map(|x| Ok((model.eval(&theta, x)?, spec.exact(&HeatData::Quadratic, cfg.horizon, x)?)));
    report(pairs.collect::<Vec<_>>().into_iter(), losses.last().copied().unwrap_or(f64::NAN), theta)
}

/// `Δu = 0` on `(0,1)²` with `u = x² − y²` on the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub interior: usize,
    pub boundary: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub eval_points: usize,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        PinnConfig {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            steps: 10000,
            interior: 128,
            boundary: 64,
            lr: 3e-3,
            lr_final: 1e-4,
            eval_points: 51,
            seed: 0,
        }
    }
}

pub fn laplace_solution(x: &[f64]) -> f64 {
    x[0] * x[0] - x[1] * x[1]
}

pub fn run_pinn_laplace(cfg: &PinnConfig) -> Result<FitReport> {
    let net = MlpArchitecture::new(widths(2, &cfg.hidden, 1), cfg.activation)?;
    let problem = BvpProblem::laplace(BoxDomain::unit(2), Arc::new(laplace_solution));
    let root = RngState::new(cfg.seed);
    let mut theta = net.init(&mut root.split(0)).values;
    let mut data = root.split(1);
    let losses = adam_minimize(&mut theta, cfg.steps, cfg.lr, cfg.lr_final, |_, th| {
        let b = problem.sample(cfg.interior, cfg.boundary, &mut data)?;
        problem.loss_and_grad(&net, th, &b)
    })?;
    let n = cfg.eval_points.max(2);
    let h = 1.0 / (n - 1) as f64;
    let pairs = (0..n * n).map(|k| {
        let x = [(k / n) as f64 * h, (k % n) as f64 * h];
        Ok((net.apply(&theta, &x)?[0], laplace_solution(&x)))
    });
    report(pairs.collect::<Vec<_>>().into_iter(), losses.last().copied().unwrap_or(f64::NAN), theta)
}

/// Backward heat equation `∂u/∂t + (ϱ²/2)Δu = 0`, `u(T, x) = Σ cos x_i`,
/// with `X_0 ~ N(0, I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsdeConfig {
    pub dim: usize,
    pub varrho: f64,
    pub horizon: f64,
    pub time_steps: usize,
    pub paths: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub eval_points: usize,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for BsdeConfig {
    fn default() -> Self {
        BsdeConfig {
            dim: 2,
            varrho: 1.0,
            horizon: 1.0,
            time_steps: 20,
            paths: 128,
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            steps: 2000,
            lr: 3e-3,
            lr_final: 1e-4,
            eval_points: 1000,
            seed: 0,
        }
    }
}

/// `e^{−ϱ²(T−t)/2} Σ cos x_i`.
pub fn cos_heat_value(varrho: f64, horizon: f64, t: f64, x: &[f64]) -> f64 {
    (-0.5 * varrho * varrho * (horizon - t)).exp() * x.iter().map(|v| v.cos()).sum::<f64>()
}

/// `∇_x` of [`cos_heat_value`].
pub fn cos_heat_gradient(varrho: f64, horizon: f64, t: f64, x: &[f64]) -> Vec<f64> {
    let a = (-0.5 * varrho * varrho * (horizon - t)).exp();
    x.iter().map(|v| -a * v.sin()).collect()
}

pub fn cos_heat_sde(dim: usize, varrho: f64, horizon: f64) -> SdeSpec {
    SdeSpec::heat(dim, varrho, horizon, Arc::new(|x: &[f64]| x.iter().map(|v| v.cos()).sum::<f64>()))
}

pub fn run_bsde(cfg: &BsdeConfig) -> Result<FitReport> {
    let sde = cos_heat_sde(cfg.dim, cfg.varrho, cfg.horizon);
    let controls = BsdeControls::new(cfg.dim, &cfg.hidden, cfg.activation)?;
    let root = RngState::new(cfg.seed);
    let mut theta = controls.init(&mut root.split(0)).values;
    let mut data = root.split(1);
    let losses = adam_minimize(&mut theta, cfg.steps, cfg.lr, cfg.lr_final, |_, th| {
        let b = BsdeBatch::sample(&mut data, cfg.dim, cfg.paths, cfg.time_steps, cfg.horizon)?;
        controls.loss_and_grad(th, &sde, &b)
    })?;
    let x0 = gauss_sample(&mut root.split(2), cfg.eval_points * cfg.dim);
    let net = controls.with_theta(&theta)?;
    use crate::stochastic::bsde::Controls;
    let pairs = x0.chunks(cfg.dim).map(|x| Ok((net.value(x)?, cos_heat_value(cfg.varrho, cfg.horizon, 0.0, x))));
    report(pairs.collect::<Vec<_>>().into_iter(), losses.last().copied().unwrap_or(f64::NAN), theta)
}

/// Sanity value used by tests: the heat solution with quadratic data.
pub fn quadratic_heat(rho: f64, t: f64, x: &[f64]) -> Result<f64> {
    heat_exact((2.0 * rho).sqrt(), &HeatData::Quadratic, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut th = vec![3.0, -2.0];
        let l = adam_minimize(&mut th, 3000, 0.05, 1e-4, |_, t| Ok((t[0] * t[0] + t[1] * t[1], vec![2.0 * t[0], 2.0 * t[1]]))).unwrap();
        assert!(l.last().unwrap() < &1e-6, "{th:?}");
    }

    #[test]
    fn cos_gradient_matches_difference() {
        let x = [0.3, -1.1];
        let g = cos_heat_gradient(1.3, 1.0, 0.2, &x);
        for i in 0..2 {
            let mut a = x;
            let mut b = x;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (cos_heat_value(1.3, 1.0, 0.2, &a) - cos_heat_value(1.3, 1.0, 0.2, &b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_reference() {
        assert!((quadratic_heat(0.5, 1.0, &[1.5]).unwrap() - (2.25 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn short_runs_reduce_error() {
        let k = run_kolmogorov(&KolmogorovConfig { steps: 300, ..Default::default() }).unwrap();
        assert!(k.relative_l2_error < 0.5, "{}", k.relative_l2_error);
        let b = run_bsde(&BsdeConfig { steps: 50, paths: 32, time_steps: 5, eval_points: 50, ..Default::default() }).unwrap();
        assert!(b.final_loss.is_finite());
    }
}
