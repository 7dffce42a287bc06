//! PINO risk `λ_Data/ℳ_Data Σ data mismatch + λ_PDE/ℳ_PDE Σ ‖𝒟(i, 𝒩_θ(i))‖²`
//! for a periodic parametric elliptic problem `−cΔu + u = f`.
//!
//! Grid operators are differentiated spectrally; DeepONet outputs are
//! differentiated through the trunk network.

use crate::autodiff::{value_and_grad, value_of, Tape, Var};
use crate::error::{invalid, shape, Result};
use crate::fourier::{fft_nd, SpectralDiff, C64};
use crate::grid::GridFunction;
use crate::operators::OperatorSpec;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinoConfig {
    pub lambda_data: f64,
    pub lambda_pde: f64,
    #[serde(default)]
    pub lambda_boundary: f64,
    #[serde(default)]
    pub lambda_init: f64,
    pub batch_data: usize,
    pub batch_pde: usize,
    #[serde(default)]
    pub batch_boundary: usize,
    #[serde(default)]
    pub batch_init: usize,
}

impl PinoConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_data, self.lambda_pde, self.lambda_boundary, self.lambda_init];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return invalid("PINO weights must be nonnegative");
        }
        if w.iter().all(|v| *v == 0.0) {
            return invalid("at least one PINO weight must be positive");
        }
        Ok(())
    }
}

/// `−cΔu + u = f` on the periodic box with side lengths `lengths`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinoProblem {
    pub c: f64,
    pub lengths: Vec<f64>,
}

impl PinoProblem {
    pub fn new(c: f64, lengths: Vec<f64>) -> Result<Self> {
        if !(c > 0.0) || lengths.is_empty() || lengths.iter().any(|s| !(*s > 0.0)) {
            return invalid("elliptic problem needs c > 0 and positive lengths");
        }
        Ok(PinoProblem { c, lengths })
    }

    fn laplacian(&self, grid: &[usize]) -> Result<SpectralDiff> {
        let mut lap = SpectralDiff::new(grid, &self.lengths, 0, 2)?;
        for ax in 1..grid.len() {
            let d = SpectralDiff::new(grid, &self.lengths, ax, 2)?;
            for (a, b) in lap.multiplier.iter_mut().zip(&d.multiplier) {
                *a += b;
            }
        }
        Ok(lap)
    }

    /// Exact discrete solution `û_k = f̂_k / (1 + c|κ_k|²)`.
    pub fn solve(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.lengths != self.lengths {
            return shape("source lives on a different domain");
        }
        let lap = self.laplacian(f.extents())?;
        let mut buf: Vec<C64> = f.data().iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_nd(&mut buf, f.extents(), false);
        let p = buf.len() as f64;
        for (z, m) in buf.iter_mut().zip(&lap.multiplier) {
            *z /= (1.0 - self.c * m.re) * p;
        }
        fft_nd(&mut buf, f.extents(), true);
        GridFunction::from_vec(self.lengths.clone(), f.extents().to_vec(), buf.iter().map(|z| z.re).collect())
    }

    /// `Δu` of the operator output for inputs `[B, P]`, together with the output.
    fn output_and_laplacian(&self, t: &mut Tape, op: &OperatorSpec, theta: Var, inputs: &Tensor) -> Result<(Var, Var)> {
        let u = op.forward(t, theta, inputs)?;
        match op {
            OperatorSpec::DeepOnet(o) => {
                let d = o.extents.len();
                let p = op.points();
                let coords = Tensor::new(vec![p, d], crate::operators::grid_coords(&o.extents))?;
                let der = o.trunk.input_derivatives(t, theta, o.branch.param_count(), &coords, &(0..d).collect::<Vec<_>>(), true)?;
                // trunk inputs are unit-cube coordinates y = x/S
                let mut lap = t.scale(der.d2[0], 1.0 / (self.lengths[0] * self.lengths[0]))?;
                for ax in 1..d {
                    let s = t.scale(der.d2[ax], 1.0 / (self.lengths[ax] * self.lengths[ax]))?;
                    lap = t.add(lap, s)?;
                }
                let b = o.branch_forward(t, theta, &inputs.clone().reshape(&[inputs.len() / p, p])?)?;
                Ok((u, t.matmul_nt(b, lap)?))
            }
            _ => {
                let lap = Rc::new(self.laplacian(op.extents())?);
                Ok((u, t.spec_diff(u, lap)?))
            }
        }
    }
}

/// Composite risk and its two components as tape nodes.
pub struct PinoRisk {
    pub total: Var,
    pub data: Var,
    pub pde: Var,
}

fn check_grid(op: &OperatorSpec, x: &Tensor, what: &str) -> Result<usize> {
    let p = op.points();
    if x.is_empty() || x.len() % p != 0 {
        return shape(format!("{what} of length {} is not a batch of {p}-point grids", x.len()));
    }
    Ok(x.len() / p)
}

impl PinoProblem {
    /// `data_inputs`/`data_targets`: `ℳ_Data` samples with reference
    /// solutions; `pde_inputs`: `ℳ_PDE` samples for the residual. Each sample
    /// contributes the mean over grid points.
    pub fn risk_tape(
        &self,
        t: &mut Tape,
        cfg: &PinoConfig,
        op: &OperatorSpec,
        theta: Var,
        data_inputs: &Tensor,
        data_targets: &Tensor,
        pde_inputs: &Tensor,
    ) -> Result<PinoRisk> {
        cfg.validate()?;
        if op.extents().len() != self.lengths.len() {
            return shape("operator grid and problem domain differ in dimension");
        }
        let bd = check_grid(op, data_inputs, "data inputs")?;
        if data_targets.len() != data_inputs.len() {
            return shape("data inputs and targets differ in size");
        }
        check_grid(op, pde_inputs, "PDE inputs")?;
        let p = op.points();
        let pred = op.forward(t, theta, data_inputs)?;
        let target = t.constant(data_targets.clone().reshape(&[bd, p])?);
        let r = t.sub(pred, target)?;
        let r2 = t.square(r)?;
        let data = t.mean(r2)?;
        let (u, lap) = self.output_and_laplacian(t, op, theta, pde_inputs)?;
        let f = t.constant(pde_inputs.clone().reshape(t.value(u).shape())?);
        let cl = t.scale(lap, -self.c)?;
        let lhs = t.add(cl, u)?;
        let res = t.sub(lhs, f)?;
        let res2 = t.square(res)?;
        let pde = t.mean(res2)?;
        let a = t.scale(data, cfg.lambda_data)?;
        let b = t.scale(pde, cfg.lambda_pde)?;
        let total = t.add(a, b)?;
        Ok(PinoRisk { total, data, pde })
    }
}

/// Value of the composite risk.
pub fn pino_risk(
    problem: &PinoProblem,
    cfg: &PinoConfig,
    op: &OperatorSpec,
    theta: &[f64],
    data_inputs: &Tensor,
    data_targets: &Tensor,
    pde_inputs: &Tensor,
) -> Result<f64> {
    value_of(theta, |t, th| Ok(problem.risk_tape(t, cfg, op, th, data_inputs, data_targets, pde_inputs)?.total))
}

pub fn pino_risk_and_grad(
    problem: &PinoProblem,
    cfg: &PinoConfig,
    op: &OperatorSpec,
    theta: &[f64],
    data_inputs: &Tensor,
    data_targets: &Tensor,
    pde_inputs: &Tensor,
) -> Result<(f64, Vec<f64>)> {
    value_and_grad(theta, |t, th| Ok(problem.risk_tape(t, cfg, op, th, data_inputs, data_targets, pde_inputs)?.total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::ann::MlpArchitecture;
    use crate::autodiff::directional_gradient_check;
    use crate::operators::{DeepOnetOperator, FnoOperator};
    use crate::rng::{gauss_sample, RngState};
    use crate::solvers::grf::{grf_sample, GrfSpec};

    fn cfg(ld: f64, lp: f64) -> PinoConfig {
        PinoConfig { lambda_data: ld, lambda_pde: lp, lambda_boundary: 0.0, lambda_init: 0.0, batch_data: 2, batch_pde: 2, batch_boundary: 0, batch_init: 0 }
    }

    fn fno() -> OperatorSpec {
        OperatorSpec::Fno(FnoOperator::new(vec![16], 3, 2, 4, Activation::Gelu, true).unwrap())
    }

    fn deeponet() -> OperatorSpec {
        OperatorSpec::DeepOnet(
            DeepOnetOperator::new(
                vec![16],
                MlpArchitecture::new(vec![16, 8, 4], Activation::Tanh).unwrap(),
                MlpArchitecture::new(vec![1, 8, 4], Activation::Tanh).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn elliptic_solution_has_zero_residual() {
        let prob = PinoProblem::new(0.3, vec![2.0]).unwrap();
        let mut r = RngState::new(0);
        let f = grf_sample(&GrfSpec::burgers(), &[2.0], &[16], &mut r).unwrap();
        let u = prob.solve(&f).unwrap();
        let lap = prob.laplacian(&[16]).unwrap().apply(u.data(), false);
        for i in 0..16 {
            assert!((-0.3 * lap[i] + u.data()[i] - f.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_degeneracy_and_linearity() {
        let prob = PinoProblem::new(0.1, vec![1.0]).unwrap();
        let mut r = RngState::new(1);
        for op in [fno(), deeponet()] {
            let theta = op.init(&mut r).values;
            let x = Tensor::new(vec![2, 16], gauss_sample(&mut r, 32)).unwrap();
            let y = Tensor::new(vec![2, 16], gauss_sample(&mut r, 32)).unwrap();
            let z = Tensor::new(vec![2, 16], gauss_sample(&mut r, 32)).unwrap();
            let data_only = pino_risk(&prob, &cfg(1.0, 0.0), &op, &theta, &x, &y, &z).unwrap();
            let pred = op.apply_batch(&theta, &x).unwrap();
            let direct = pred.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 32.0;
            assert!((data_only - direct).abs() < 1e-12);
            let r1 = pino_risk(&prob, &cfg(1.0, 0.5), &op, &theta, &x, &y, &z).unwrap();
            let r2 = pino_risk(&prob, &cfg(2.0, 0.5), &op, &theta, &x, &y, &z).unwrap();
            assert!((r2 - r1 - data_only).abs() < 1e-10);
            assert!(pino_risk(&prob, &cfg(0.0, 0.0), &op, &theta, &x, &y, &z).is_err());
        }
    }

    #[test]
    fn gradients_match_fd() {
        let prob = PinoProblem::new(0.05, vec![1.0]).unwrap();
        let mut r = RngState::new(2);
        for op in [fno(), deeponet()] {
            let theta = op.init(&mut r).values;
            let x = Tensor::new(vec![2, 16], gauss_sample(&mut r, 32)).unwrap();
            let y = Tensor::new(vec![2, 16], gauss_sample(&mut r, 32)).unwrap();
            let (_, g) = pino_risk_and_grad(&prob, &cfg(1.0, 0.7), &op, &theta, &x, &y, &x).unwrap();
            let f = |th: &[f64]| pino_risk(&prob, &cfg(1.0, 0.7), &op, th, &x, &y, &x);
            let err = directional_gradient_check(&theta, &g, f, 20, 1e-5, &mut r).unwrap();
            assert!(err < 1e-5, "{} {err}", op.kind());
        }
    }

    #[test]
    fn deeponet_laplacian_matches_trunk_fd() {
        let prob = PinoProblem::new(1.0, vec![2.0]).unwrap();
        let op = deeponet();
        let mut r = RngState::new(3);
        let theta = op.init(&mut r).values;
        let x = Tensor::new(vec![1, 16], gauss_sample(&mut r, 16)).unwrap();
        let mut t = Tape::new();
        let th = t.constant(Tensor::from_vec(theta.clone()));
        let (_, lap) = prob.output_and_laplacian(&mut t, &op, th, &x).unwrap();
        let OperatorSpec::DeepOnet(o) = &op else { unreachable!() };
        let h = 1e-4;
        for i in [0usize, 5, 11] {
            let y = i as f64 / 16.0;
            let e = |y: f64| o.eval_at(&theta, x.data(), &[y]).unwrap();
            let fd = (e(y + h) - 2.0 * e(y) + e(y - h)) / (h * h) / 4.0;
            assert!((t.value(lap).data()[i] - fd).abs() < 1e-5);
        }
    }
}
