//! Second-order central finite differences for `d ≤ 2`.

use super::linalg::cyclic_tridiag_solve;
use super::{check_finite, Nonlinearity, SemilinearPde, SolverConfig};
use crate::error::{invalid, Result};
use crate::fourier::{fft_nd, C64};
use crate::grid::{multi_index, strides, GridFunction};
use crate::tensor::Tensor;
use std::f64::consts::PI;

/// Eigenvalue `λ̃_k = Σ (4/h²) sin²(πk/N)` of `−Δ_h`.
pub fn fdm_symbol(k: &[usize], n: usize, lengths: &[f64]) -> f64 {
    k.iter()
        .zip(lengths)
        .map(|(&k, &s)| {
            let h = s / n as f64;
            let sn = (PI * k as f64 / n as f64).sin();
            4.0 / (h * h) * sn * sn
        })
        .sum()
}

struct Fdm<'a> {
    pde: &'a SemilinearPde,
    ext: Vec<usize>,
    h: Vec<f64>,
    symbol: Vec<f64>,
}

impl Fdm<'_> {
    fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let st = strides(&self.ext);
        let mut out = vec![0.0; u.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let ii = multi_index(i, &self.ext);
            for ax in 0..self.ext.len() {
                let n = self.ext[ax];
                let up = i - ii[ax] * st[ax] + ((ii[ax] + 1) % n) * st[ax];
                let dn = i - ii[ax] * st[ax] + ((ii[ax] + n - 1) % n) * st[ax];
                *o += (u[up] - 2.0 * u[i] + u[dn]) / (self.h[ax] * self.h[ax]);
            }
        }
        out
    }

    fn nonlinear(&self, u: &[f64], g: Option<&[f64]>) -> Vec<f64> {
        match self.pde.nonlinearity {
            Nonlinearity::Heat => vec![0.0; u.len()],
            Nonlinearity::BurgersConservative => {
                let n = u.len();
                (0..n)
                    .map(|i| {
                        let a = u[(i + 1) % n];
                        let b = u[(i + n - 1) % n];
                        -(a * a - b * b) / (4.0 * self.h[0])
                    })
                    .collect()
            }
            _ => u.iter().enumerate().map(|(i, &v)| self.pde.pointwise(v, g.map_or(0.0, |g| g[i]))).collect(),
        }
    }

    /// `(I − α·cΔ_h)⁻¹ r`.
    fn implicit_solve(&self, alpha: f64, r: &[f64]) -> Result<Vec<f64>> {
        let c = self.pde.c;
        if self.ext.len() == 1 {
            let h2 = self.h[0] * self.h[0];
            return cyclic_tridiag_solve(1.0 + 2.0 * alpha * c / h2, -alpha * c / h2, r);
        }
        let mut buf: Vec<C64> = r.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_nd(&mut buf, &self.ext, false);
        for (z, s) in buf.iter_mut().zip(&self.symbol) {
            *z /= 1.0 + alpha * c * s;
        }
        fft_nd(&mut buf, &self.ext, true);
        let p = r.len() as f64;
        Ok(buf.iter().map(|z| z.re / p).collect())
    }
}

pub fn fdm_solve(pde: &SemilinearPde, g0: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    let d = pde.dims();
    if d > 2 {
        return invalid("finite differences are implemented for d ≤ 2");
    }
    if pde.nonlinearity == Nonlinearity::BurgersConservative && d != 1 {
        return invalid("the Burgers nonlinearity is one-dimensional");
    }
    let ext = g0.extents().to_vec();
    let symbol = (0..g0.len()).map(|i| fdm_symbol(&multi_index(i, &ext), cfg.n, &pde.lengths)).collect();
    let s = Fdm { pde, h: pde.lengths.iter().map(|l| l / cfg.n as f64).collect(), ext: ext.clone(), symbol };
    let g = pde.source_values(&ext)?;
    let dt = pde.horizon / cfg.steps as f64;
    let mut u = g0.data().to_vec();
    for step in 0..cfg.steps {
        let lu = s.laplacian(&u);
        let f0 = s.nonlinear(&u, g);
        let r: Vec<f64> = (0..u.len()).map(|i| u[i] + 0.25 * dt * pde.c * lu[i] + 0.5 * dt * f0[i]).collect();
        let mid = s.implicit_solve(0.25 * dt, &r)?;
        let f1 = s.nonlinear(&mid, g);
        let r: Vec<f64> = (0..u.len()).map(|i| u[i] + 0.5 * dt * pde.c * lu[i] + dt * f1[i]).collect();
        u = s.implicit_solve(0.5 * dt, &r)?;
        check_finite(&u, step + 1)?;
    }
    GridFunction::new(pde.lengths.clone(), Tensor::new(ext, u)?)
}
