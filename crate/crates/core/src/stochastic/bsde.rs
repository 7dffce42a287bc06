//! Deep BSDE rollouts: `Y_0 = v(X_0)`,
//! `Y_{m+1} = Y_m − f(t_m, X_m, Y_m, V(t_m, X_m))·dt + ⟨V(t_m, X_m), ΔB_m⟩`.

use super::sde::{euler_maruyama, BrownianPath, SdeSpec};
use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::autodiff::{value_and_grad, Tape, Var};
use crate::error::{invalid, shape, Error, Result};
use crate::rng::{gauss_sample, split_stream, RngState};
use crate::tensor::{ParamVector, Tensor};
use rayon::prelude::*;

/// Initial-value model `v: ℝ^d → ℝ` and gradient model `V: [0,T]×ℝ^d → ℝ^d`.
pub trait Controls: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
}

pub struct AnalyticControls<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Controls for AnalyticControls<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(f64, &[f64]) -> Vec<f64> + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x))
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.gradient)(t, x))
    }
}

/// Network controls on one flat parameter vector: the value network first,
/// then the gradient network (input `(t, x)`).
#[derive(Clone, Debug, PartialEq)]
pub struct BsdeControls {
    pub value: MlpArchitecture,
    pub gradient: MlpArchitecture,
}

pub struct NetworkControls<'a> {
    pub arch: &'a BsdeControls,
    pub theta: &'a [f64],
}

impl Controls for NetworkControls<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.arch.value.apply(&self.theta[..self.arch.value.param_count()], x)?[0])
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut inp = Vec::with_capacity(x.len() + 1);
        inp.push(t);
        inp.extend_from_slice(x);
        self.arch.gradient.apply(&self.theta[self.arch.value.param_count()..], &inp)
    }
}

impl BsdeControls {
    pub fn new(dim: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let mut vw = vec![dim];
        vw.extend_from_slice(hidden);
        vw.push(1);
        let mut gw = vec![dim + 1];
        gw.extend_from_slice(hidden);
        gw.push(dim);
        Ok(BsdeControls { value: MlpArchitecture::new(vw, activation)?, gradient: MlpArchitecture::new(gw, activation)? })
    }

    pub fn dim(&self) -> usize {
        self.value.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.value.param_count() + self.gradient.param_count()
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = vec![0.0; self.param_count()];
        let nv = self.value.param_count();
        self.value.init_into(rng, &mut p[..nv]);
        self.gradient.init_into(rng, &mut p[nv..]);
        ParamVector::from(p)
    }

    pub fn with_theta<'a>(&'a self, theta: &'a [f64]) -> Result<NetworkControls<'a>> {
        if theta.len() != self.param_count() {
            return shape(format!("controls need {} parameters, got {}", self.param_count(), theta.len()));
        }
        Ok(NetworkControls { arch: self, theta })
    }

    /// Terminal loss as a tape node, differentiable in `theta`.
    pub fn loss_tape(&self, t: &mut Tape, theta: Var, sde: &SdeSpec, batch: &BsdeBatch) -> Result<Var> {
        let d = self.dim();
        if sde.dim != d || batch.dim != d {
            return shape(format!("controls of dimension {d} for SDE of dimension {}", sde.dim));
        }
        let k = batch.len();
        if k == 0 {
            return invalid("empty BSDE batch");
        }
        let states = batch.states(sde)?;
        let steps = batch.paths[0].steps();
        let dt = batch.paths[0].dt;
        let x_at = |m: usize| -> Vec<f64> { states.iter().flat_map(|s| s[m].iter().cloned()).collect() };
        let x0 = t.constant(Tensor::new(vec![k, d], x_at(0))?);
        let mut y = self.value.forward(t, theta, 0, x0)?;
        let base = self.value.param_count();
        for m in 0..steps {
            let tm = m as f64 * dt;
            let xm = x_at(m);
            let mut inp = Vec::with_capacity(k * (d + 1));
            for row in xm.chunks(d) {
                inp.push(tm);
                inp.extend_from_slice(row);
            }
            let inp = t.constant(Tensor::new(vec![k, d + 1], inp)?);
            let z = self.gradient.forward(t, theta, base, inp)?;
            if let Some(f) = sde.generator.eval_tape(t, y, z)? {
                let fd = t.scale(f, -dt)?;
                y = t.add(y, fd)?;
            }
            let db: Vec<f64> = batch.paths.iter().flat_map(|p| p.increment(m).iter().cloned()).collect();
            let db = t.constant(Tensor::new(vec![k, d], db)?);
            let zb = t.mul(z, db)?;
            let s = t.row_sum(zb)?;
            y = t.add(y, s)?;
        }
        let g: Vec<f64> = states.iter().map(|s| (sde.terminal)(&s[steps])).collect();
        let g = t.constant(Tensor::new(vec![k, 1], g)?);
        let r = t.sub(y, g)?;
        let r2 = t.square(r)?;
        t.mean(r2)
    }

    pub fn loss_and_grad(&self, theta: &[f64], sde: &SdeSpec, batch: &BsdeBatch) -> Result<(f64, Vec<f64>)> {
        self.with_theta(theta)?;
        value_and_grad(theta, |t, th| self.loss_tape(t, th, sde, batch))
    }
}

/// Initial states and Brownian increments for `K` paths.
#[derive(Clone, Debug, PartialEq)]
pub struct BsdeBatch {
    pub dim: usize,
    /// `K×d`.
    pub x0: Vec<f64>,
    pub paths: Vec<BrownianPath>,
}

impl BsdeBatch {
    /// `X_0 ~ N(0, I)`; each path draws from its own child stream.
    pub fn sample(rng: &mut RngState, dim: usize, paths: usize, steps: usize, horizon: f64) -> Result<Self> {
        let x0 = gauss_sample(rng, paths * dim);
        BsdeBatch::with_initial(rng, dim, x0, steps, horizon)
    }

    pub fn with_initial(rng: &mut RngState, dim: usize, x0: Vec<f64>, steps: usize, horizon: f64) -> Result<Self> {
        if dim == 0 || x0.len() % dim != 0 {
            return shape(format!("{} initial coordinates in dimension {dim}", x0.len()));
        }
        let key = rng.next_u64();
        let base = split_stream(rng, key);
        let paths = (0..x0.len() / dim)
            .map(|i| BrownianPath::sample(&mut split_stream(&base, i as u64), dim, steps, horizon))
            .collect::<Result<Vec<_>>>()?;
        Ok(BsdeBatch { dim, x0, paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn states(&self, sde: &SdeSpec) -> Result<Vec<Vec<Vec<f64>>>> {
        self.paths
            .par_iter()
            .enumerate()
            .map(|(i, p)| euler_maruyama(sde, &self.x0[i * self.dim..(i + 1) * self.dim], p))
            .collect()
    }
}

/// `(Y_0, …, Y_M)` and `(X_0, …, X_M)`.
pub fn bsde_rollout(sde: &SdeSpec, controls: &dyn Controls, x0: &[f64], path: &BrownianPath) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let xs = euler_maruyama(sde, x0, path)?;
    let mut ys = Vec::with_capacity(xs.len());
    ys.push(controls.value(x0)?);
    for m in 0..path.steps() {
        let tm = m as f64 * path.dt;
        let z = controls.gradient(tm, &xs[m])?;
        if z.len() != sde.dim {
            return shape(format!("gradient control returned {} components in dimension {}", z.len(), sde.dim));
        }
        let y = ys[m];
        let next = y - sde.generator.eval(y, &z) * path.dt + z.iter().zip(path.increment(m)).map(|(a, b)| a * b).sum::<f64>();
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite Y at step {}", m + 1)));
        }
        ys.push(next);
    }
    Ok((ys, xs))
}

/// `mean |Y_T − g(X_T)|²` over the batch.
pub fn bsde_terminal_loss(sde: &SdeSpec, controls: &dyn Controls, batch: &BsdeBatch) -> Result<f64> {
    if batch.is_empty() {
        return invalid("empty BSDE batch");
    }
    let terms: Vec<f64> = batch
        .paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (ys, xs) = bsde_rollout(sde, controls, &batch.x0[i * batch.dim..(i + 1) * batch.dim], p)?;
            let r = ys.last().unwrap() - (sde.terminal)(xs.last().unwrap());
            Ok(r * r)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}
