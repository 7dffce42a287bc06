//! Fourier pseudo-spectral discretization.

use super::{check_finite, Nonlinearity, SemilinearPde, SolverConfig};
use crate::error::{invalid, Result};
use crate::fourier::{fft_nd, signed_freq, C64};
use crate::grid::{multi_index, GridFunction};
use crate::tensor::Tensor;
use std::f64::consts::PI;

/// Per-mode wavenumber data on an `N^d` grid.
pub(crate) struct Modes {
    pub ext: Vec<usize>,
    /// `|κ|²` with `κ = 2πk/S`.
    pub lambda: Vec<f64>,
    /// `iκ_1`, zero at the Nyquist mode.
    pub dx: Vec<C64>,
    /// 2/3-rule mask.
    pub keep: Vec<bool>,
}

impl Modes {
    pub fn new(ext: &[usize], lengths: &[f64]) -> Self {
        let p: usize = ext.iter().product();
        let mut lambda = vec![0.0; p];
        let mut dx = vec![C64::new(0.0, 0.0); p];
        let mut keep = vec![true; p];
        for i in 0..p {
            let ii = multi_index(i, ext);
            for (ax, &k) in ii.iter().enumerate() {
                let n = ext[ax];
                let s = signed_freq(k, n);
                let kappa = 2.0 * PI * s as f64 / lengths[ax];
                lambda[i] += kappa * kappa;
                if 3 * s.unsigned_abs() as usize > n {
                    keep[i] = false;
                }
                if ax == 0 && !(n % 2 == 0 && k == n / 2) {
                    dx[i] = C64::new(0.0, kappa);
                }
            }
        }
        Modes { ext: ext.to_vec(), lambda, dx, keep }
    }
}

fn to_physical(uh: &[C64], ext: &[usize]) -> Vec<f64> {
    let p = uh.len() as f64;
    let mut buf = uh.to_vec();
    fft_nd(&mut buf, ext, true);
    buf.iter().map(|z| z.re / p).collect()
}

fn to_spectral(u: &[f64], ext: &[usize]) -> Vec<C64> {
    let mut buf: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft_nd(&mut buf, ext, false);
    buf
}

fn nonlinear_hat(pde: &SemilinearPde, modes: &Modes, uh: &[C64], g: Option<&[f64]>, dealias: bool) -> Vec<C64> {
    let u = to_physical(uh, &modes.ext);
    let mut fh = match pde.nonlinearity {
        Nonlinearity::Heat => return vec![C64::new(0.0, 0.0); uh.len()],
        Nonlinearity::BurgersConservative => {
            let w: Vec<f64> = u.iter().map(|v| v * v).collect();
            let mut wh = to_spectral(&w, &modes.ext);
            for (z, d) in wh.iter_mut().zip(&modes.dx) {
                *z *= -0.5 * d;
            }
            wh
        }
        _ => {
            let f: Vec<f64> = u.iter().enumerate().map(|(i, &v)| pde.pointwise(v, g.map_or(0.0, |g| g[i]))).collect();
            to_spectral(&f, &modes.ext)
        }
    };
    if dealias {
        for (z, &k) in fh.iter_mut().zip(&modes.keep) {
            if !k {
                *z = C64::new(0.0, 0.0);
            }
        }
    }
    fh
}

pub fn spectral_solve(pde: &SemilinearPde, g0: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    if pde.nonlinearity == Nonlinearity::BurgersConservative && pde.dims() != 1 {
        return invalid("the Burgers nonlinearity is one-dimensional");
    }
    let ext = g0.extents().to_vec();
    let modes = Modes::new(&ext, &pde.lengths);
    let g = pde.source_values(&ext)?;
    let dt = pde.horizon / cfg.steps as f64;
    let a: Vec<f64> = modes.lambda.iter().map(|l| -pde.c * l).collect();
    let mut uh = to_spectral(g0.data(), &ext);
    for step in 0..cfg.steps {
        let f0 = nonlinear_hat(pde, &modes, &uh, g, cfg.dealias);
        let mid: Vec<C64> = (0..uh.len())
            .map(|k| ((1.0 + 0.25 * dt * a[k]) * uh[k] + 0.5 * dt * f0[k]) / (1.0 - 0.25 * dt * a[k]))
            .collect();
        let f1 = nonlinear_hat(pde, &modes, &mid, g, cfg.dealias);
        for k in 0..uh.len() {
            uh[k] = ((1.0 + 0.5 * dt * a[k]) * uh[k] + dt * f1[k]) / (1.0 - 0.5 * dt * a[k]);
        }
        if uh.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            check_finite(&[f64::NAN], step + 1)?;
        }
    }
    let u = to_physical(&uh, &ext);
    check_finite(&u, cfg.steps)?;
    GridFunction::new(pde.lengths.clone(), Tensor::new(ext, u)?)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::grid::grid_sample;

    #[test]
    fn heat_mode_decays_exactly_in_space() {
        let pde = SemilinearPde::heat(vec![1.0], 0.5, 1.0);
        let g0 = grid_sample(|x| Ok((2.0 * PI * x[0]).sin()), &[16], &[1.0]).unwrap();
        let cfg = SolverConfig::new(Method::Spectral, 16, 400).unwrap();
        let u = solve(&pde, &g0, &cfg).unwrap();
        let decay = (-0.5 * 4.0 * PI * PI * 1.0f64).exp();
        for (a, b) in u.data().iter().zip(g0.data()) {
            assert!((a - decay * b).abs() < 1e-5);
        }
    }

    #[test]
    fn burgers_conserves_mean() {
        let pde = SemilinearPde::burgers();
        let g0 = grid_sample(|x| Ok(1.0 + x[0].sin() + 0.5 * (2.0 * x[0]).cos()), &[32], &pde.lengths).unwrap();
        let cfg = SolverConfig::new(Method::Spectral, 32, 200).unwrap();
        let u = solve(&pde, &g0, &cfg).unwrap();
        let m0: f64 = g0.data().iter().sum::<f64>() / 32.0;
        let m1: f64 = u.data().iter().sum::<f64>() / 32.0;
        assert!((m0 - m1).abs() < 1e-12);
    }

    #[test]
    fn allen_cahn_equilibria() {
        let pde = SemilinearPde::allen_cahn(2);
        let cfg = SolverConfig::new(Method::Spectral, 8, 10).unwrap();
        for v in [-1.0, 0.0, 1.0] {
            let g0 = GridFunction::zeros(&pde.lengths, &[8, 8]).map(|_| v);
            let u = solve(&pde, &g0, &cfg).unwrap();
            assert!(u.data().iter().all(|x| (x - v).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_mismatched_grid() {
        let pde = SemilinearPde::burgers();
        let g0 = GridFunction::zeros(&pde.lengths, &[16]);
        let cfg = SolverConfig::new(Method::Spectral, 32, 10).unwrap();
        assert!(solve(&pde, &g0, &cfg).is_err());
    }
}
