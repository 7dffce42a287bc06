//! Euler–Maruyama simulation of `dX = μ(t, X)dt + σ(t, X)dB`.

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, shape, Error, Result};
use crate::rng::{gauss_sample, RngState};
use crate::tensor::Tensor;
use std::sync::Arc;

pub type DriftFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Row-major `d×d` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Generator nonlinearity `f(t, x, y, z)` of the BSDE. Kept to closed forms
/// so the rollout can be differentiated on the tape.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Zero,
    Constant(f64),
    /// `a·y + ⟨b, z⟩`
    Linear { a: f64, b: Vec<f64> },
    /// `y − y³`
    AllenCahn,
}

impl Generator {
    pub fn eval(&self, y: f64, z: &[f64]) -> f64 {
        match self {
            Generator::Zero => 0.0,
            Generator::Constant(c) => *c,
            Generator::Linear { a, b } => a * y + b.iter().zip(z).map(|(b, z)| b * z).sum::<f64>(),
            Generator::AllenCahn => y - y * y * y,
        }
    }

    /// `f` on `y [K,1]`, `z [K,d]`; `None` for the zero generator.
    pub(crate) fn eval_tape(&self, t: &mut Tape, y: Var, z: Var) -> Result<Option<Var>> {
        let k = t.value(y).len();
        Ok(match self {
            Generator::Zero => None,
            Generator::Constant(c) => Some(t.constant(Tensor::filled(&[k, 1], *c))),
            Generator::Linear { a, b } => {
                let d = b.len();
                let bb = t.constant(Tensor::new(vec![k, d], b.iter().cloned().cycle().take(k * d).collect())?);
                let zb = t.mul(z, bb)?;
                let zs = t.row_sum(zb)?;
                let ay = t.scale(y, *a)?;
                Some(t.add(ay, zs)?)
            }
            Generator::AllenCahn => {
                let y2 = t.mul(y, y)?;
                let y3 = t.mul(y2, y)?;
                Some(t.sub(y, y3)?)
            }
        })
    }
}

#[derive(Clone)]
pub struct SdeSpec {
    pub dim: usize,
    pub horizon: f64,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub generator: Generator,
    pub terminal: TerminalFn,
}

impl SdeSpec {
    /// `μ = 0`, `σ = ϱI`, `f = 0`: the heat equation `∂u/∂t + (ϱ²/2)Δu = 0`
    /// backward from `u(T) = g`.
    pub fn heat(dim: usize, varrho: f64, horizon: f64, terminal: TerminalFn) -> Self {
        SdeSpec {
            dim,
            horizon,
            drift: Arc::new(move |_, _| vec![0.0; dim]),
            diffusion: Arc::new(move |_, _| {
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = varrho;
                }
                m
            }),
            generator: Generator::Zero,
            terminal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.horizon > 0.0) {
            return invalid("SDE needs d ≥ 1 and T > 0");
        }
        if let Generator::Linear { b, .. } = &self.generator {
            if b.len() != self.dim {
                return shape(format!("generator coefficient of length {} in dimension {}", b.len(), self.dim));
            }
        }
        Ok(())
    }
}

/// Increments of a `d`-dimensional Brownian motion on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    pub dim: usize,
    /// `M×d`, row `m` is `B_{t_{m+1}} − B_{t_m}`.
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn sample(rng: &mut RngState, dim: usize, steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 || dim == 0 || !(horizon > 0.0) {
            return invalid("Brownian path needs M ≥ 1, d ≥ 1, T > 0");
        }
        let dt = horizon / steps as f64;
        let s = dt.sqrt();
        let increments = gauss_sample(rng, steps * dim).into_iter().map(|z| s * z).collect();
        Ok(BrownianPath { dt, dim, increments })
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn increment(&self, m: usize) -> &[f64] {
        &self.increments[m * self.dim..(m + 1) * self.dim]
    }
}

/// States `X_0, …, X_M`.
pub fn euler_maruyama(sde: &SdeSpec, x0: &[f64], path: &BrownianPath) -> Result<Vec<Vec<f64>>> {
    sde.validate()?;
    let d = sde.dim;
    if x0.len() != d || path.dim != d {
        return shape(format!("state of dimension {} and path of dimension {} for a {d}-d SDE", x0.len(), path.dim));
    }
    if path.steps() == 0 {
        return invalid("path has no steps");
    }
    let mut xs = Vec::with_capacity(path.steps() + 1);
    xs.push(x0.to_vec());
    for m in 0..path.steps() {
        let t = m as f64 * path.dt;
        let x = &xs[m];
        let mu = (sde.drift)(t, x);
        let sig = (sde.diffusion)(t, x);
        let db = path.increment(m);
        let next: Vec<f64> = (0..d)
            .map(|i| x[i] + mu[i] * path.dt + (0..d).map(|j| sig[i * d + j] * db[j]).sum::<f64>())
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite SDE state at step {}", m + 1)));
        }
        xs.push(next);
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_drift(d: usize, mu: f64, sigma: f64) -> SdeSpec {
        let mut s = SdeSpec::heat(d, sigma, 1.0, Arc::new(|_| 0.0));
        s.drift = Arc::new(move |_, _| vec![mu; d]);
        s
    }

    #[test]
    fn deterministic_cases() {
        let mut r = RngState::new(0);
        for m in [1, 7, 100] {
            let p = BrownianPath::sample(&mut r, 1, m, 1.0).unwrap();
            let xs = euler_maruyama(&constant_drift(1, 0.0, 0.0), &[0.3], &p).unwrap();
            assert!(xs.iter().all(|x| x[0] == 0.3));
            let xs = euler_maruyama(&constant_drift(1, 1.0, 0.0), &[0.0], &p).unwrap();
            assert!((xs[m][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn brownian_moments() {
        let mut r = RngState::new(1);
        let k = 10_000;
        let sde = constant_drift(1, 0.0, 1.0);
        let ends: Vec<f64> = (0..k)
            .map(|_| {
                let p = BrownianPath::sample(&mut r, 1, 10, 1.0).unwrap();
                euler_maruyama(&sde, &[0.5], &p).unwrap()[10][0]
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / k as f64;
        let var = ends.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
        let tol = 3.0 * (2.0 / k as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 / (k as f64).sqrt());
        assert!((var - 1.0).abs() < tol, "{var}");
    }

    #[test]
    fn dimension_mismatch() {
        let mut r = RngState::new(2);
        let p = BrownianPath::sample(&mut r, 2, 3, 1.0).unwrap();
        assert!(euler_maruyama(&constant_drift(1, 0.0, 1.0), &[0.0], &p).is_err());
    }
}
