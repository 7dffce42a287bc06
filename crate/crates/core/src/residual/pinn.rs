//! PINN losses `‖𝒟(v)(x)‖² + ‖ℬ(v)(y)‖²` on box domains.

use crate::ann::MlpArchitecture;
use crate::autodiff::{value_and_grad, value_of, Tape, Var};
use crate::error::{invalid, shape, Result};
use crate::rng::{uniform_sample, RngState};
use crate::tensor::Tensor;
use std::sync::Arc;

/// Network value and requested input derivatives at rows `x [R, l₀]`.
/// `d1[i]`, `d2[i]` belong to input coordinate `coords[i]`.
pub struct PointDerivs<'a> {
    pub x: &'a Tensor,
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
}

pub type ResidualFn = Arc<dyn Fn(&mut Tape, &PointDerivs) -> Result<Var> + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A residual operator together with the input derivatives it consumes.
#[derive(Clone)]
pub struct Residual {
    pub coords: Vec<usize>,
    pub second: bool,
    pub f: ResidualFn,
}

/// `[R, 1]` constant from a pointwise function of the input rows.
pub fn point_data(t: &mut Tape, x: &Tensor, f: &dyn Fn(&[f64]) -> f64) -> Result<Var> {
    let d = x.shape().last().copied().unwrap_or(1);
    let r = x.len() / d;
    let v = x.data().chunks(d).map(f).collect();
    Ok(t.constant(Tensor::new(vec![r, 1], v)?))
}

fn sum_vars(t: &mut Tape, vs: &[Var]) -> Result<Var> {
    let mut acc = vs[0];
    for &v in &vs[1..] {
        acc = t.add(acc, v)?;
    }
    Ok(acc)
}

impl Residual {
    /// `Δv` over input coordinates `0..d`.
    pub fn laplace(d: usize) -> Self {
        Residual { coords: (0..d).collect(), second: true, f: Arc::new(|t, p| sum_vars(t, &p.d2)) }
    }

    /// `−Δv − f`.
    pub fn poisson(d: usize, f: PointFn) -> Self {
        Residual {
            coords: (0..d).collect(),
            second: true,
            f: Arc::new(move |t, p| {
                let lap = sum_vars(t, &p.d2)?;
                let fx = point_data(t, p.x, &*f)?;
                let s = t.add(lap, fx)?;
                t.scale(s, -1.0)
            }),
        }
    }

    /// `v − g`.
    pub fn dirichlet(g: PointFn) -> Self {
        Residual {
            coords: vec![],
            second: false,
            f: Arc::new(move |t, p| {
                let gx = point_data(t, p.x, &*g)?;
                t.sub(p.value, gx)
            }),
        }
    }

    /// `∂v/∂t − cΔ_x v` on rows `(t, x_1, …, x_d)`.
    pub fn heat(c: f64, d: usize) -> Self {
        Residual {
            coords: (0..=d).collect(),
            second: true,
            f: Arc::new(move |t, p| {
                let lap = sum_vars(t, &p.d2[1..])?;
                let cl = t.scale(lap, c)?;
                t.sub(p.d1[0], cl)
            }),
        }
    }

    /// Mean over rows of `‖residual‖²`.
    pub fn mean_sq(&self, t: &mut Tape, net: &MlpArchitecture, theta: Var, base: usize, x: &Tensor) -> Result<Var> {
        let der = net.input_derivatives(t, theta, base, x, &self.coords, self.second)?;
        let r = (self.f)(t, &PointDerivs { x, value: der.value, d1: der.d1, d2: der.d2 })?;
        let r2 = t.square(r)?;
        let s = t.row_sum(r2)?;
        t.mean(s)
    }
}

/// Axis-aligned box `∏[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return invalid("box needs lo < hi in every coordinate");
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        BoxDomain { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// `k` uniform interior points as rows `[k, d]`.
    pub fn sample_interior(&self, k: usize, rng: &mut RngState) -> Result<Tensor> {
        let d = self.dim();
        let mut v = Vec::with_capacity(k * d);
        for _ in 0..k {
            for i in 0..d {
                v.push(uniform_sample(rng, self.lo[i], self.hi[i], 1)?[0]);
            }
        }
        Tensor::new(vec![k, d], v)
    }

    /// `k` boundary points, faces chosen with probability proportional to
    /// their measure.
    pub fn sample_boundary(&self, k: usize, rng: &mut RngState) -> Result<Tensor> {
        let d = self.dim();
        let side: Vec<f64> = (0..d).map(|i| self.hi[i] - self.lo[i]).collect();
        let face: Vec<f64> = (0..d).map(|i| (0..d).filter(|&j| j != i).map(|j| side[j]).product()).collect();
        let total: f64 = face.iter().sum();
        let mut v = Vec::with_capacity(k * d);
        for _ in 0..k {
            let mut u = rng.next_f64() * total;
            let mut axis = d - 1;
            for (i, f) in face.iter().enumerate() {
                if u < *f {
                    axis = i;
                    break;
                }
                u -= f;
            }
            let high = rng.next_f64() < 0.5;
            for i in 0..d {
                v.push(if i == axis {
                    if high {
                        self.hi[i]
                    } else {
                        self.lo[i]
                    }
                } else {
                    uniform_sample(rng, self.lo[i], self.hi[i], 1)?[0]
                });
            }
        }
        Tensor::new(vec![k, d], v)
    }
}

/// Interior, boundary and (time-dependent problems) initial points.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnBatch {
    pub interior: Tensor,
    pub boundary: Tensor,
    pub initial: Option<Tensor>,
}

#[derive(Clone)]
pub struct BvpProblem {
    pub domain: BoxDomain,
    pub out_dim: usize,
    pub interior: Residual,
    pub boundary: Residual,
}

impl BvpProblem {
    /// `Δu = 0` in the box, `u = f` on its boundary.
    pub fn laplace(domain: BoxDomain, f: PointFn) -> Self {
        let d = domain.dim();
        BvpProblem { domain, out_dim: 1, interior: Residual::laplace(d), boundary: Residual::dirichlet(f) }
    }

    pub fn sample(&self, interior: usize, boundary: usize, rng: &mut RngState) -> Result<PinnBatch> {
        Ok(PinnBatch {
            interior: self.domain.sample_interior(interior, rng)?,
            boundary: self.domain.sample_boundary(boundary, rng)?,
            initial: None,
        })
    }

    fn check(&self, net: &MlpArchitecture) -> Result<()> {
        if net.input_dim() != self.domain.dim() || net.output_dim() != self.out_dim {
            return shape(format!("network {:?} does not map ℝ^{} → ℝ^{}", net.widths, self.domain.dim(), self.out_dim));
        }
        Ok(())
    }

    pub fn loss_tape(&self, t: &mut Tape, net: &MlpArchitecture, theta: Var, batch: &PinnBatch) -> Result<Var> {
        self.check(net)?;
        let a = self.interior.mean_sq(t, net, theta, 0, &batch.interior)?;
        let b = self.boundary.mean_sq(t, net, theta, 0, &batch.boundary)?;
        t.add(a, b)
    }

    pub fn loss_and_grad(&self, net: &MlpArchitecture, theta: &[f64], batch: &PinnBatch) -> Result<(f64, Vec<f64>)> {
        value_and_grad(theta, |t, th| self.loss_tape(t, net, th, batch))
    }
}

pub fn pinn_bvp_loss(problem: &BvpProblem, net: &MlpArchitecture, theta: &[f64], batch: &PinnBatch) -> Result<f64> {
    value_of(theta, |t, th| problem.loss_tape(t, net, th, batch))
}

/// Time-dependent problem on `[0,T] × D`; network inputs are `(t, x)`.
#[derive(Clone)]
pub struct IvpProblem {
    pub horizon: f64,
    pub domain: BoxDomain,
    pub interior: Residual,
    pub boundary: Residual,
    pub initial: PointFn,
}

impl IvpProblem {
    /// `∂u/∂t = cΔu`, `u = g(t, y)` on the boundary, `u(0) = φ`.
    pub fn heat(c: f64, horizon: f64, domain: BoxDomain, g: PointFn, phi: PointFn) -> Self {
        let d = domain.dim();
        IvpProblem { horizon, domain, interior: Residual::heat(c, d), boundary: Residual::dirichlet(g), initial: phi }
    }

    pub fn sample(&self, interior: usize, boundary: usize, initial: usize, rng: &mut RngState) -> Result<PinnBatch> {
        let with_time = |x: Tensor, rng: &mut RngState| -> Result<Tensor> {
            let d = self.domain.dim();
            let k = x.len() / d;
            let ts = uniform_sample(rng, 0.0, self.horizon, k)?;
            let mut v = Vec::with_capacity(k * (d + 1));
            for (i, row) in x.data().chunks(d).enumerate() {
                v.push(ts[i]);
                v.extend_from_slice(row);
            }
            Tensor::new(vec![k, d + 1], v)
        };
        let xi = self.domain.sample_interior(interior, rng)?;
        let xb = self.domain.sample_boundary(boundary, rng)?;
        Ok(PinnBatch {
            interior: with_time(xi, rng)?,
            boundary: with_time(xb, rng)?,
            initial: Some(self.domain.sample_interior(initial, rng)?),
        })
    }

    pub fn loss_tape(&self, t: &mut Tape, net: &MlpArchitecture, theta: Var, batch: &PinnBatch) -> Result<Var> {
        let d = self.domain.dim();
        if net.input_dim() != d + 1 || net.output_dim() != 1 {
            return shape(format!("network {:?} does not map ℝ^{} → ℝ", net.widths, d + 1));
        }
        let x0 = batch.initial.as_ref().ok_or_else(|| crate::error::Error::InvalidInput("initial points missing".into()))?;
        let a = self.interior.mean_sq(t, net, theta, 0, &batch.interior)?;
        let b = self.boundary.mean_sq(t, net, theta, 0, &batch.boundary)?;
        let k = x0.len() / d;
        let mut rows = Vec::with_capacity(k * (d + 1));
        for row in x0.data().chunks(d) {
            rows.push(0.0);
            rows.extend_from_slice(row);
        }
        let rows = t.constant(Tensor::new(vec![k, d + 1], rows)?);
        let v0 = net.forward(t, theta, 0, rows)?;
        let phi = point_data(t, x0, &*self.initial)?;
        let r = t.sub(v0, phi)?;
        let r2 = t.square(r)?;
        let c = t.mean(r2)?;
        let ab = t.add(a, b)?;
        t.add(ab, c)
    }

    pub fn loss_and_grad(&self, net: &MlpArchitecture, theta: &[f64], batch: &PinnBatch) -> Result<(f64, Vec<f64>)> {
        value_and_grad(theta, |t, th| self.loss_tape(t, net, th, batch))
    }
}

pub fn pinn_ivp_loss(problem: &IvpProblem, net: &MlpArchitecture, theta: &[f64], batch: &PinnBatch) -> Result<f64> {
    value_of(theta, |t, th| problem.loss_tape(t, net, th, batch))
}
