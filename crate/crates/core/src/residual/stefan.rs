//! PINN loss for the one-phase Stefan problem
//!
//! ```text
//! ∂u₁/∂t = ∂²u₁/∂x²  for 0 < x < u₂(t),   ∂u₁/∂x(t, 0) = g(t),
//! u₁(t, u₂(t)) = h₀(t),  ∂u₁/∂x(t, u₂(t)) = h₁(t),  u₁(0, x) = φ(x),  u₂(0) = ψ.
//! ```

use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::autodiff::{value_and_grad, value_of, Tape, Var};
use crate::error::{invalid, shape, Error, Result};
use crate::jet::{self, Jet};
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct StefanProblem {
    pub horizon: f64,
    pub psi: f64,
    pub phi: ScalarFn,
    pub g: ScalarFn,
    pub h0: ScalarFn,
    pub h1: ScalarFn,
    /// Upper end of the `x` sampling interval.
    pub x_max: f64,
}

impl StefanProblem {
    pub fn new(horizon: f64, psi: f64, phi: ScalarFn, g: ScalarFn, h0: ScalarFn, h1: ScalarFn) -> Result<Self> {
        if !(horizon > 0.0) || !(psi > 0.0) {
            return invalid("Stefan problem needs T > 0 and ψ > 0");
        }
        Ok(StefanProblem { horizon, psi, phi, g, h0, h1, x_max: 2.0 * psi })
    }
}

/// `u₁: (t, x) ↦ ℝ` and `u₂: t ↦ ℝ` on one parameter vector, `u₁` first.
#[derive(Clone, Debug, PartialEq)]
pub struct StefanNets {
    pub u1: MlpArchitecture,
    pub u2: MlpArchitecture,
}

impl StefanNets {
    pub fn new(hidden1: &[usize], hidden2: &[usize], activation: Activation) -> Result<Self> {
        let w = |inp: usize, h: &[usize]| {
            let mut v = vec![inp];
            v.extend_from_slice(h);
            v.push(1);
            v
        };
        Ok(StefanNets { u1: MlpArchitecture::new(w(2, hidden1), activation)?, u2: MlpArchitecture::new(w(1, hidden2), activation)? })
    }

    pub fn param_count(&self) -> usize {
        self.u1.param_count() + self.u2.param_count()
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let n1 = self.u1.param_count();
        self.u1.init_into(rng, &mut p.values[..n1]);
        self.u2.init_into(rng, &mut p.values[n1..]);
        p
    }

    pub fn front(&self, theta: &[f64], t: f64) -> Result<f64> {
        Ok(self.u2.apply(&theta[self.u1.param_count()..], &[t])?[0])
    }

    fn check(&self, theta_len: usize) -> Result<()> {
        if self.u1.input_dim() != 2 || self.u2.input_dim() != 1 || self.u1.output_dim() != 1 || self.u2.output_dim() != 1 {
            return shape("Stefan networks must map ℝ² → ℝ and ℝ → ℝ");
        }
        if theta_len != self.param_count() {
            return shape(format!("Stefan networks need {} parameters, got {theta_len}", self.param_count()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StefanBatch {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl StefanBatch {
    /// Uniform `(t, x)` on `[0,T] × [0, x_max]`, keeping only `x < u₂(t)`
    /// for the current front network.
    pub fn sample(problem: &StefanProblem, nets: &StefanNets, theta: &[f64], k: usize, rng: &mut RngState) -> Result<Self> {
        nets.check(theta.len())?;
        let (mut ts, mut xs) = (Vec::with_capacity(k), Vec::with_capacity(k));
        let mut tries = 0usize;
        while ts.len() < k {
            tries += 1;
            if tries > 1000 * k.max(1) {
                return Err(Error::Numerical("moving domain {x < u₂(t)} is empty on the sampling box".into()));
            }
            let t = rng.next_f64() * problem.horizon;
            let x = rng.next_f64() * problem.x_max;
            if x < nets.front(theta, t)? {
                ts.push(t);
                xs.push(x);
            }
        }
        Ok(StefanBatch { t: ts, x: xs })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn col(t: &mut Tape, v: Vec<f64>) -> Result<Var> {
    let n = v.len();
    Ok(t.constant(Tensor::new(vec![n, 1], v)?))
}

fn sq_mean(t: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let r = t.sub(a, b)?;
    let r2 = t.square(r)?;
    t.mean(r2)
}

impl StefanProblem {
    pub fn loss_tape(&self, t: &mut Tape, nets: &StefanNets, theta: Var, batch: &StefanBatch) -> Result<Var> {
        nets.check(t.value(theta).len())?;
        let k = batch.len();
        if k == 0 {
            return invalid("empty Stefan batch");
        }
        let b2 = nets.u1.param_count();
        let pts: Vec<f64> = batch.t.iter().zip(&batch.x).flat_map(|(a, b)| [*a, *b]).collect();
        let pts = Tensor::new(vec![k, 2], pts)?;
        // ∂u₁/∂t − ∂²u₁/∂x²
        let der = nets.u1.input_derivatives(t, theta, 0, &pts, &[0, 1], true)?;
        let pde = t.sub(der.d1[0], der.d2[1])?;
        let pde2 = t.square(pde)?;
        let mut total = t.mean(pde2)?;
        // ∂u₁/∂x(t, 0) − g(t)
        let at0 = Tensor::new(vec![k, 2], batch.t.iter().flat_map(|a| [*a, 0.0]).collect())?;
        let d0 = nets.u1.input_derivatives(t, theta, 0, &at0, &[1], false)?;
        let g = col(t, batch.t.iter().map(|s| (self.g)(*s)).collect())?;
        let term = sq_mean(t, d0.d1[0], g)?;
        total = t.add(total, term)?;
        // u₁ and ∂u₁/∂x at (t, u₂(t))
        let tc = col(t, batch.t.clone())?;
        let front = nets.u2.forward(t, theta, b2, tc)?;
        let xin = t.concat_cols(&[tc, front])?;
        let dir = t.constant(Tensor::new(vec![k, 2], (0..2 * k).map(|i| (i % 2) as f64).collect())?);
        let jf = nets.u1.forward_jet(t, theta, 0, &Jet { v: xin, d1: Some(dir), d2: None })?;
        let h0 = col(t, batch.t.iter().map(|s| (self.h0)(*s)).collect())?;
        let term = sq_mean(t, jf.v, h0)?;
        total = t.add(total, term)?;
        let dx = jet::part(t, jf.v, jf.d1);
        let h1 = col(t, batch.t.iter().map(|s| (self.h1)(*s)).collect())?;
        let term = sq_mean(t, dx, h1)?;
        total = t.add(total, term)?;
        // u₁(0, x) − φ(x)
        let init = t.constant(Tensor::new(vec![k, 2], batch.x.iter().flat_map(|x| [0.0, *x]).collect())?);
        let v0 = nets.u1.forward(t, theta, 0, init)?;
        let phi = col(t, batch.x.iter().map(|x| (self.phi)(*x)).collect())?;
        let term = sq_mean(t, v0, phi)?;
        total = t.add(total, term)?;
        // u₂(0) − ψ
        let z = t.constant(Tensor::zeros(&[1, 1]));
        let f0 = nets.u2.forward(t, theta, b2, z)?;
        let f0 = t.offset(f0, -self.psi)?;
        let f0 = t.square(f0)?;
        let f0 = t.sum(f0)?;
        t.add(total, f0)
    }

    pub fn loss_and_grad(&self, nets: &StefanNets, theta: &[f64], batch: &StefanBatch) -> Result<(f64, Vec<f64>)> {
        value_and_grad(theta, |t, th| self.loss_tape(t, nets, th, batch))
    }
}

pub fn stefan_loss(problem: &StefanProblem, nets: &StefanNets, theta: &[f64], batch: &StefanBatch) -> Result<f64> {
    value_of(theta, |t, th| problem.loss_tape(t, nets, th, batch))
}
