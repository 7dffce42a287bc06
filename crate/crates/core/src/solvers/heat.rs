//! Closed-form solutions of `∂u/∂t = (ϱ²/2)Δu`, `u(x, t) = E[φ(x + ϱW_t)]`.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KolmogorovVariant {
    /// Learn `x ↦ u(T, x)`; `ϱ = √(2Tρ)`, paths run over unit time.
    Terminal,
    /// Learn `(t, x) ↦ u(t, x)`; `ϱ = √(2ρ)`.
    Full,
}

/// Heat equation `∂u/∂t = ρΔu` on `ℝ^d` up to horizon `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovSpec {
    pub dim: usize,
    pub horizon: f64,
    pub rho: f64,
    pub variant: KolmogorovVariant,
}

impl KolmogorovSpec {
    pub fn new(dim: usize, horizon: f64, rho: f64, variant: KolmogorovVariant) -> Result<Self> {
        if dim == 0 || !(rho > 0.0) || !(horizon > 0.0) {
            return invalid("Kolmogorov problem needs d ≥ 1, ρ > 0, T > 0");
        }
        Ok(KolmogorovSpec { dim, horizon, rho, variant })
    }

    pub fn varrho(&self) -> f64 {
        match self.variant {
            KolmogorovVariant::Terminal => (2.0 * self.horizon * self.rho).sqrt(),
            KolmogorovVariant::Full => (2.0 * self.rho).sqrt(),
        }
    }

    /// `u(t, x)` for `∂u/∂t = ρΔu`, `u(0) = φ`.
    pub fn exact(&self, phi: &HeatData, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return invalid(format!("point of dimension {} for a {}-d problem", x.len(), self.dim));
        }
        heat_exact((2.0 * self.rho).sqrt(), phi, t, x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeatData {
    /// `⟨a, x⟩ + b`
    Affine { a: Vec<f64>, b: f64 },
    /// `|x|²`
    Quadratic,
    /// `A·exp(−|x − m|²/(2s²))`
    Gaussian { amplitude: f64, center: Vec<f64>, width: f64 },
    /// `Re Σ a_k e^{2πi⟨k, x/S⟩}` on a periodic box.
    Periodic { lengths: Vec<f64>, modes: Vec<(Vec<i64>, f64, f64)> },
}

impl HeatData {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        heat_exact(0.0, self, 0.0, x)
    }
}

/// `E[φ(x + ϱW_t)]`. For periodic data this is the mode decay with
/// diffusion coefficient `ϱ²/2`.
pub fn heat_exact(varrho: f64, phi: &HeatData, t: f64, x: &[f64]) -> Result<f64> {
    if t < 0.0 {
        return invalid("negative time");
    }
    let var = varrho * varrho * t;
    let dim_check = |n: usize| if n != x.len() { invalid(format!("data of dimension {n} evaluated at a {}-d point", x.len())) } else { Ok(()) };
    match phi {
        HeatData::Affine { a, b } => {
            dim_check(a.len())?;
            Ok(a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + b)
        }
        HeatData::Quadratic => Ok(x.iter().map(|v| v * v).sum::<f64>() + var * x.len() as f64),
        HeatData::Gaussian { amplitude, center, width } => {
            dim_check(center.len())?;
            if !(*width > 0.0) {
                return invalid("bump width must be positive");
            }
            let s2 = width * width + var;
            let r2: f64 = x.iter().zip(center).map(|(x, m)| (x - m) * (x - m)).sum();
            Ok(amplitude * (width * width / s2).powf(0.5 * x.len() as f64) * (-r2 / (2.0 * s2)).exp())
        }
        HeatData::Periodic { lengths, modes } => {
            dim_check(lengths.len())?;
            let c = 0.5 * varrho * varrho;
            let mut acc = 0.0;
            for (k, re, im) in modes {
                dim_check(k.len())?;
                let mut lambda = 0.0;
                let mut phase = 0.0;
                for ((&k, &s), &x) in k.iter().zip(lengths).zip(x) {
                    let w = 2.0 * PI * k as f64 / s;
                    lambda += w * w;
                    phase += w * x;
                }
                acc += (-c * lambda * t).exp() * (re * phase.cos() - im * phase.sin());
            }
            Ok(acc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let v = 1.3;
        assert_eq!(heat_exact(v, &HeatData::Affine { a: vec![1.0], b: 0.0 }, 0.7, &[0.4]).unwrap(), 0.4);
        let q = heat_exact(v, &HeatData::Quadratic, 0.5, &[2.0]).unwrap();
        assert!((q - (4.0 + v * v * 0.5)).abs() < 1e-14);
        let c = 0.25f64;
        let p = HeatData::Periodic { lengths: vec![1.0], modes: vec![(vec![2], 0.0, -1.0)] };
        let u = heat_exact((2.0 * c).sqrt(), &p, 0.3, &[0.1]).unwrap();
        let want = (-c * (4.0 * PI).powi(2) * 0.3).exp() * (4.0 * PI * 0.1).sin();
        assert!((u - want).abs() < 1e-14);
        assert!(heat_exact(v, &HeatData::Affine { a: vec![1.0, 2.0], b: 0.0 }, 0.1, &[0.0]).is_err());
    }

    #[test]
    fn gaussian_matches_quadrature() {
        let phi = HeatData::Gaussian { amplitude: 2.0, center: vec![0.5], width: 0.7 };
        let (vr, t, x) = (0.8f64, 0.6f64, 0.2);
        let sd = vr * t.sqrt();
        let n = 20000;
        let h = 16.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = -8.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * phi.eval(&[x + sd * z]).unwrap() * (-0.5 * z * z).exp();
        }
        acc *= h / (2.0 * PI).sqrt();
        assert!((acc - heat_exact(vr, &phi, t, &[x]).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn varrho_variants() {
        let k = KolmogorovSpec::new(1, 2.0, 0.5, KolmogorovVariant::Terminal).unwrap();
        assert!((k.varrho() - 2f64.sqrt()).abs() < 1e-15);
        let k = KolmogorovSpec { variant: KolmogorovVariant::Full, ..k };
        assert!((k.varrho() - 1.0).abs() < 1e-15);
        assert!(KolmogorovSpec::new(1, 1.0, 0.0, KolmogorovVariant::Full).is_err());
    }
}
