//! Periodic piecewise-linear finite elements in one dimension.
//!
//! Mass matrix `h/6·[1 4 1]`, stiffness `1/h·[−1 2 −1]`; the nonlinearity is
//! interpolated nodally before assembling the load.

use super::linalg::cyclic_tridiag_solve;
use super::{check_finite, Nonlinearity, SemilinearPde, SolverConfig};
use crate::error::{invalid, Result};
use crate::grid::GridFunction;
use crate::tensor::Tensor;

fn circulant(d: f64, e: f64, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n).map(|i| d * u[i] + e * (u[(i + 1) % n] + u[(i + n - 1) % n])).collect()
}

fn load(pde: &SemilinearPde, h: f64, u: &[f64], g: Option<&[f64]>) -> Vec<f64> {
    let n = u.len();
    match pde.nonlinearity {
        Nonlinearity::Heat => vec![0.0; n],
        Nonlinearity::BurgersConservative => (0..n)
            .map(|i| {
                let a = u[(i + 1) % n];
                let b = u[(i + n - 1) % n];
                -(a * a - b * b) / 4.0
            })
            .collect(),
        _ => {
            let f: Vec<f64> = u.iter().enumerate().map(|(i, &v)| pde.pointwise(v, g.map_or(0.0, |g| g[i]))).collect();
            circulant(4.0 * h / 6.0, h / 6.0, &f)
        }
    }
}

pub fn fem_solve(pde: &SemilinearPde, g0: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    if pde.dims() != 1 {
        return invalid("finite elements are implemented for d = 1");
    }
    let n = cfg.n;
    let h = pde.lengths[0] / n as f64;
    let c = pde.c;
    let g = pde.source_values(&[n])?;
    let dt = pde.horizon / cfg.steps as f64;
    let (md, me) = (4.0 * h / 6.0, h / 6.0);
    let (kd, ke) = (2.0 / h, -1.0 / h);
    let mut u = g0.data().to_vec();
    for step in 0..cfg.steps {
        // (M + αcK) x = (M − αcK) u_n + 2α·b(v)
        let stage = |alpha: f64, v: &[f64]| {
            let b = load(pde, h, v, g);
            let lhs = circulant(md - alpha * c * kd, me - alpha * c * ke, &u);
            let r: Vec<f64> = lhs.iter().zip(&b).map(|(l, b)| l + 2.0 * alpha * b).collect();
            cyclic_tridiag_solve(md + alpha * c * kd, me + alpha * c * ke, &r)
        };
        let mid = stage(0.25 * dt, &u)?;
        u = stage(0.5 * dt, &mid)?;
        check_finite(&u, step + 1)?;
    }
    GridFunction::new(pde.lengths.clone(), Tensor::new(vec![n], u)?)
}
