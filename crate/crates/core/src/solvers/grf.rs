//! Gaussian random fields on periodic grids with covariance
//! `σ²(η·I − Δ)^{−r} − c₀·I`.

use crate::error::{invalid, Result};
use crate::fourier::{fft_nd, signed_freq, C64};
use crate::grid::{flatten_index, multi_index, GridFunction};
use crate::rng::RngState;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub variance: f64,
    pub offset: f64,
    pub decay: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_clamp")]
    pub clamp: bool,
}

fn default_clamp() -> bool {
    true
}

impl GrfSpec {
    pub fn new(variance: f64, offset: f64, decay: f64, shift: f64) -> Result<Self> {
        let g = GrfSpec { variance, offset, decay, shift, clamp: true };
        g.validate()?;
        Ok(g)
    }

    pub fn burgers() -> Self {
        GrfSpec::new(1e6, 10.0, 6.0, 0.0).unwrap()
    }

    pub fn allen_cahn() -> Self {
        GrfSpec::new(25e6, 5000f64.sqrt(), 4.0, 0.8).unwrap()
    }

    pub fn reaction_diffusion() -> Self {
        GrfSpec::new(1e8, 100.0, 4.0, 0.8).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.offset > 0.0 && self.decay > 0.0) || !self.shift.is_finite() {
            return invalid("GRF needs σ² > 0, η > 0, r > 0");
        }
        Ok(())
    }

    /// Declared variance at Laplacian eigenvalue `λ`, clamped at zero when
    /// the clamp flag is set.
    pub fn mode_variance(&self, lambda: f64) -> f64 {
        let v = self.variance * (self.offset + lambda).powf(-self.decay) - self.shift;
        if self.clamp {
            v.max(0.0)
        } else {
            v
        }
    }

    /// `v_k` for the DFT index `k` on a grid with `extents` over `lengths`.
    pub fn variance_at(&self, k: &[usize], extents: &[usize], lengths: &[f64]) -> f64 {
        let lambda: f64 = k
            .iter()
            .zip(extents)
            .zip(lengths)
            .map(|((&k, &n), &s)| {
                let w = 2.0 * PI * signed_freq(k, n) as f64 / s;
                w * w
            })
            .sum();
        self.mode_variance(lambda)
    }
}

/// Fourier coefficients `c_k` of a sample, in the convention
/// `u(x) = Σ_k c_k e^{2πi⟨k,x/S⟩}` with `E|c_k|² = v_k` and `c_{−k} = conj(c_k)`.
pub fn grf_coefficients(spec: &GrfSpec, lengths: &[f64], extents: &[usize], rng: &mut RngState) -> Result<Vec<C64>> {
    spec.validate()?;
    if lengths.len() != extents.len() || extents.iter().any(|&n| n == 0) {
        return invalid(format!("extents {extents:?} incompatible with lengths {lengths:?}"));
    }
    let p: usize = extents.iter().product();
    let mut c = vec![C64::new(0.0, 0.0); p];
    for i in 0..p {
        let ii = multi_index(i, extents);
        let jj: Vec<usize> = ii.iter().zip(extents).map(|(&k, &n)| (n - k) % n).collect();
        let j = flatten_index(&jj, extents);
        if j < i {
            continue;
        }
        let v = spec.variance_at(&ii, extents, lengths);
        if v < 0.0 {
            return invalid(format!("negative mode variance {v} at {ii:?} without clamping"));
        }
        if j == i {
            c[i] = C64::new(v.sqrt() * rng.next_gauss(), 0.0);
        } else {
            let (a, b) = rng.next_gauss_pair();
            let s = (0.5 * v).sqrt();
            c[i] = C64::new(s * a, s * b);
            c[j] = c[i].conj();
        }
    }
    Ok(c)
}

pub fn grf_sample(spec: &GrfSpec, lengths: &[f64], extents: &[usize], rng: &mut RngState) -> Result<GridFunction> {
    let mut c = grf_coefficients(spec, lengths, extents, rng)?;
    fft_nd(&mut c, extents, true);
    GridFunction::new(lengths.to_vec(), Tensor::new(extents.to_vec(), c.iter().map(|z| z.re).collect())?)
}
