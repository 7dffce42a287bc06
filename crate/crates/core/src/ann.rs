//! Fully-connected feed-forward networks on a flat parameter vector.
//!
//! Layer `k` occupies `l_k·l_{k−1}` row-major weights followed by `l_k`
//! biases; the activation follows every layer except the last.

use crate::activation::Activation;
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, shape, Result};
use crate::jet::{self, Jet};
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// `W x + b` with `W` (m×n, row-major) at `θ[s..s+mn]` and `b` right after.
pub fn affine_apply(theta: &[f64], s: usize, m: usize, n: usize, x: &[f64]) -> Result<Vec<f64>> {
    if theta.len() < s + m * n + m {
        return invalid(format!("affine block at offset {s} of size {m}×{n} overflows θ of length {}", theta.len()));
    }
    if x.len() != n {
        return shape(format!("affine map expects {n} inputs, got {}", x.len()));
    }
    let w = &theta[s..s + m * n];
    let b = &theta[s + m * n..s + m * n + m];
    Ok((0..m).map(|i| b[i] + w[i * n..(i + 1) * n].iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect())
}

pub fn activation_map(act: Activation, x: &Tensor) -> Tensor {
    x.map(|v| act.apply(v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return invalid(format!("network widths must have at least two positive entries, got {widths:?}"));
        }
        Ok(MlpArchitecture { widths, activation })
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// `𝔡_j = Σ_{k≤j} l_k(l_{k−1}+1)`.
    pub fn offset(&self, j: usize) -> usize {
        (1..=j).map(|k| self.widths[k] * (self.widths[k - 1] + 1)).sum()
    }

    pub fn param_count(&self) -> usize {
        self.offset(self.depth())
    }

    /// Uniform weights on ±√(6/(fan_in+fan_out)), zero biases.
    pub fn init_into(&self, rng: &mut RngState, out: &mut [f64]) {
        for k in 1..=self.depth() {
            let (n, m) = (self.widths[k - 1], self.widths[k]);
            let s = self.offset(k - 1);
            let a = (6.0 / (n + m) as f64).sqrt();
            for v in &mut out[s..s + m * n] {
                *v = a * (2.0 * rng.next_f64() - 1.0);
            }
            out[s + m * n..s + m * n + m].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        self.init_into(rng, &mut p.values);
        p
    }

    pub fn apply(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.param_count() {
            return shape(format!("network needs {} parameters, got {}", self.param_count(), theta.len()));
        }
        if x.len() != self.input_dim() {
            return shape(format!("network expects {} inputs, got {}", self.input_dim(), x.len()));
        }
        let mut h = x.to_vec();
        for k in 1..=self.depth() {
            h = affine_apply(theta, self.offset(k - 1), self.widths[k], self.widths[k - 1], &h)?;
            if k < self.depth() {
                h.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    fn layer_vars(&self, t: &mut Tape, theta: Var, base: usize, k: usize) -> Result<(Var, Var)> {
        let (n, m) = (self.widths[k - 1], self.widths[k]);
        let s = base + self.offset(k - 1);
        Ok((t.slice(theta, s, &[m, n])?, t.slice(theta, s + m * n, &[m])?))
    }

    /// Batched forward pass on rows `x [R, l₀]`, parameters read from
    /// `theta[base..base+param_count]`.
    pub fn forward(&self, t: &mut Tape, theta: Var, base: usize, x: Var) -> Result<Var> {
        if t.value(theta).len() < base + self.param_count() {
            return shape("parameter vector too short for network");
        }
        let mut h = x;
        for k in 1..=self.depth() {
            let (w, b) = self.layer_vars(t, theta, base, k)?;
            h = t.matmul_nt(h, w)?;
            h = t.add_row_bias(h, b)?;
            if k < self.depth() {
                h = t.act(h, self.activation, 0)?;
            }
        }
        Ok(h)
    }

    pub fn forward_jet(&self, t: &mut Tape, theta: Var, base: usize, x: &Jet) -> Result<Jet> {
        let mut h = *x;
        for k in 1..=self.depth() {
            let (w, b) = self.layer_vars(t, theta, base, k)?;
            h = jet::linear(t, &h, w, Some(b))?;
            if k < self.depth() {
                h = jet::activate(t, &h, self.activation)?;
            }
        }
        Ok(h)
    }

    /// Value and per-coordinate first/second input derivatives on rows
    /// `x [R, l₀]`. Each returned node has shape `[R, l_L]`. One stacked
    /// pass carries all requested coordinate directions.
    pub fn input_derivatives(
        &self,
        t: &mut Tape,
        theta: Var,
        base: usize,
        x: &Tensor,
        coords: &[usize],
        second: bool,
    ) -> Result<InputDerivatives> {
        let d = self.input_dim();
        let r = x.len() / d;
        if x.len() != r * d || r == 0 {
            return shape(format!("input rows must have {d} columns"));
        }
        if coords.iter().any(|&c| c >= d) {
            return invalid("derivative coordinate out of range");
        }
        if coords.is_empty() {
            let xv = t.constant(x.clone().reshape(&[r, d])?);
            let value = self.forward(t, theta, base, xv)?;
            return Ok(InputDerivatives { value, d1: vec![], d2: vec![] });
        }
        let k = coords.len();
        let mut xs = Vec::with_capacity(k * r * d);
        let mut dirs = vec![0.0; k * r * d];
        for (ci, &c) in coords.iter().enumerate() {
            xs.extend_from_slice(x.data());
            for row in 0..r {
                dirs[(ci * r + row) * d + c] = 1.0;
            }
        }
        let xv = t.constant(Tensor::raw(vec![k * r, d], xs));
        let dv = t.constant(Tensor::raw(vec![k * r, d], dirs));
        let out = if second {
            self.forward_jet(t, theta, base, &Jet::seed(xv, dv))?
        } else {
            let o = self.forward_jet_first(t, theta, base, xv, dv)?;
            Jet { v: o.0, d1: Some(o.1), d2: None }
        };
        let rows = |ci: usize| Rc::new((ci * r..(ci + 1) * r).collect::<Vec<usize>>());
        let value = t.gather_rows(out.v, rows(0))?;
        let d1all = jet::part(t, out.v, out.d1);
        let d2all = if second { Some(jet::part(t, out.v, out.d2)) } else { None };
        let mut d1 = Vec::with_capacity(k);
        let mut d2 = Vec::new();
        for ci in 0..k {
            d1.push(t.gather_rows(d1all, rows(ci))?);
            if let Some(a) = d2all {
                d2.push(t.gather_rows(a, rows(ci))?);
            }
        }
        Ok(InputDerivatives { value, d1, d2 })
    }

    /// First-order tangent pass; unlike the full jet this accepts relu.
    fn forward_jet_first(&self, t: &mut Tape, theta: Var, base: usize, x: Var, dx: Var) -> Result<(Var, Var)> {
        let (mut h, mut dh) = (x, dx);
        for k in 1..=self.depth() {
            let (w, b) = self.layer_vars(t, theta, base, k)?;
            h = t.matmul_nt(h, w)?;
            h = t.add_row_bias(h, b)?;
            dh = t.matmul_nt(dh, w)?;
            if k < self.depth() {
                let s1 = t.act(h, self.activation, 1)?;
                dh = t.mul(s1, dh)?;
                h = t.act(h, self.activation, 0)?;
            }
        }
        Ok((h, dh))
    }

    fn scalar_output(&self) -> Result<()> {
        if self.output_dim() != 1 {
            return shape(format!("input derivatives need a scalar-output network, got {} outputs", self.output_dim()));
        }
        Ok(())
    }

    pub fn input_gradient(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.scalar_output()?;
        self.check(theta, x)?;
        let mut t = Tape::new();
        let th = t.constant(Tensor::from_vec(theta.to_vec()));
        let xv = t.leaf(Tensor::new(vec![1, x.len()], x.to_vec())?);
        let y = self.forward(&mut t, th, 0, xv)?;
        let s = t.sum(y)?;
        Ok(t.grad(s, &[xv])?.remove(0))
    }

    pub fn input_laplacian(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.scalar_output()?;
        self.check(theta, x)?;
        let mut t = Tape::new();
        let th = t.constant(Tensor::from_vec(theta.to_vec()));
        let coords: Vec<usize> = (0..x.len()).collect();
        let xt = Tensor::new(vec![1, x.len()], x.to_vec())?;
        let der = self.input_derivatives(&mut t, th, 0, &xt, &coords, true)?;
        Ok(der.d2.iter().map(|&v| t.scalar_value(v)).sum())
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() || x.len() != self.input_dim() {
            return shape(format!(
                "network with {} inputs and {} parameters got {} inputs and {} parameters",
                self.input_dim(),
                self.param_count(),
                x.len(),
                theta.len()
            ));
        }
        Ok(())
    }
}

/// Outputs of [`MlpArchitecture::input_derivatives`].
pub struct InputDerivatives {
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
}
