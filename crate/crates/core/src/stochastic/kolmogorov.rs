//! Deep Kolmogorov regression losses for the heat equation `∂u/∂t = ρΔu`.
//!
//! Terminal variant: `E|φ(ϱ𝔹 + ξ) − v(ξ)|²` with `ϱ = √(2Tρ)`.
//! Full variant: `E|φ(ϱ√τ 𝔹 + ξ) − v(τ, ξ)|²` with `ϱ = √(2ρ)`, `τ ~ U[0,T]`.

use crate::ann::MlpArchitecture;
use crate::autodiff::{value_and_grad, Tape, Var};
use crate::error::{invalid, shape, Result};
use crate::rng::{gauss_sample, split_stream, uniform_sample, RngState};
use crate::solvers::heat::{KolmogorovSpec, KolmogorovVariant};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Law of the spatial samples `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum XiLaw {
    Normal,
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovBatch {
    pub dim: usize,
    /// `K×d`.
    pub xi: Vec<f64>,
    /// Full variant only.
    pub tau: Option<Vec<f64>>,
    /// `K×d` standard normal.
    pub normal: Vec<f64>,
}

impl KolmogorovBatch {
    /// `ξ`, `τ` and `𝔹` come from independent child streams of `rng`.
    pub fn sample(spec: &KolmogorovSpec, law: XiLaw, k: usize, rng: &mut RngState) -> Result<Self> {
        let d = spec.dim;
        let key = rng.next_u64();
        let base = split_stream(rng, key);
        let xi = match law {
            XiLaw::Normal => gauss_sample(&mut split_stream(&base, 0), k * d),
            XiLaw::Uniform { lo, hi } => uniform_sample(&mut split_stream(&base, 0), lo, hi, k * d)?,
        };
        let tau = match spec.variant {
            KolmogorovVariant::Terminal => None,
            KolmogorovVariant::Full => Some(uniform_sample(&mut split_stream(&base, 1), 0.0, spec.horizon, k)?),
        };
        let normal = gauss_sample(&mut split_stream(&base, 2), k * d);
        Ok(KolmogorovBatch { dim: d, xi, tau, normal })
    }

    pub fn len(&self) -> usize {
        self.xi.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    fn check(&self, spec: &KolmogorovSpec) -> Result<()> {
        if self.is_empty() {
            return invalid("empty Kolmogorov batch");
        }
        if self.dim != spec.dim || self.normal.len() != self.xi.len() {
            return shape(format!("batch of dimension {} for a {}-d problem", self.dim, spec.dim));
        }
        match (spec.variant, &self.tau) {
            (KolmogorovVariant::Full, None) => invalid("full-solution loss needs τ samples"),
            (KolmogorovVariant::Full, Some(t)) if t.len() != self.len() => shape("one τ per sample required"),
            _ => Ok(()),
        }
    }

    fn xi_row(&self, i: usize) -> &[f64] {
        &self.xi[i * self.dim..(i + 1) * self.dim]
    }

    /// `φ(ϱ√s 𝔹 + ξ)` per sample, with `s = τ` (full) or `1` (terminal).
    pub fn targets<F: Fn(&[f64]) -> f64>(&self, spec: &KolmogorovSpec, phi: F) -> Result<Vec<f64>> {
        self.check(spec)?;
        let vr = spec.varrho();
        let d = self.dim;
        let mut p = vec![0.0; d];
        Ok((0..self.len())
            .map(|i| {
                let s = self.tau.as_ref().map_or(1.0, |t| t[i].sqrt());
                for j in 0..d {
                    p[j] = vr * s * self.normal[i * d + j] + self.xi[i * d + j];
                }
                phi(&p)
            })
            .collect())
    }

    /// Network input rows: `ξ` or `(τ, ξ)`.
    pub fn inputs(&self) -> Tensor {
        let k = self.len();
        match &self.tau {
            None => Tensor::new(vec![k, self.dim], self.xi.clone()).unwrap(),
            Some(t) => {
                let mut v = Vec::with_capacity(k * (self.dim + 1));
                for i in 0..k {
                    v.push(t[i]);
                    v.extend_from_slice(self.xi_row(i));
                }
                Tensor::new(vec![k, self.dim + 1], v).unwrap()
            }
        }
    }
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn kolmogorov_terminal_loss<P, V>(spec: &KolmogorovSpec, phi: P, v: V, batch: &KolmogorovBatch) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    V: Fn(&[f64]) -> f64,
{
    if spec.variant != KolmogorovVariant::Terminal || batch.tau.is_some() {
        return invalid("terminal loss needs the terminal variant");
    }
    let y = batch.targets(spec, phi)?;
    let pred: Vec<f64> = (0..batch.len()).map(|i| v(batch.xi_row(i))).collect();
    Ok(mean_sq(&y, &pred))
}

pub fn kolmogorov_full_loss<P, V>(spec: &KolmogorovSpec, phi: P, v: V, batch: &KolmogorovBatch) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    V: Fn(f64, &[f64]) -> f64,
{
    if spec.variant != KolmogorovVariant::Full {
        return invalid("full-solution loss needs the full variant");
    }
    let y = batch.targets(spec, phi)?;
    let tau = batch.tau.as_ref().unwrap();
    let pred: Vec<f64> = (0..batch.len()).map(|i| v(tau[i], batch.xi_row(i))).collect();
    Ok(mean_sq(&y, &pred))
}

/// A scalar network `v` trained by either Kolmogorov loss.
#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovModel {
    pub spec: KolmogorovSpec,
    pub net: MlpArchitecture,
}

impl KolmogorovModel {
    pub fn new(spec: KolmogorovSpec, net: MlpArchitecture) -> Result<Self> {
        let want = spec.dim + usize::from(spec.variant == KolmogorovVariant::Full);
        if net.input_dim() != want || net.output_dim() != 1 {
            return shape(format!("network must map ℝ^{want} → ℝ, has widths {:?}", net.widths));
        }
        Ok(KolmogorovModel { spec, net })
    }

    pub fn loss_tape<P: Fn(&[f64]) -> f64>(&self, t: &mut Tape, theta: Var, phi: P, batch: &KolmogorovBatch) -> Result<Var> {
        let y = batch.targets(&self.spec, phi)?;
        let x = t.constant(batch.inputs());
        let out = self.net.forward(t, theta, 0, x)?;
        let y = t.constant(Tensor::new(vec![batch.len(), 1], y)?);
        let r = t.sub(out, y)?;
        let r2 = t.square(r)?;
        t.mean(r2)
    }

    pub fn loss_and_grad<P: Fn(&[f64]) -> f64>(&self, theta: &[f64], phi: P, batch: &KolmogorovBatch) -> Result<(f64, Vec<f64>)> {
        value_and_grad(theta, |t, th| self.loss_tape(t, th, phi, batch))
    }

    pub fn loss<P: Fn(&[f64]) -> f64>(&self, theta: &[f64], phi: P, batch: &KolmogorovBatch) -> Result<f64> {
        let net = |x: &[f64]| self.net.apply(theta, x).map(|v| v[0]).unwrap_or(f64::NAN);
        match self.spec.variant {
            KolmogorovVariant::Terminal => kolmogorov_terminal_loss(&self.spec, phi, net, batch),
            KolmogorovVariant::Full => kolmogorov_full_loss(
                &self.spec,
                phi,
                |t, x| {
                    let mut inp = vec![t];
                    inp.extend_from_slice(x);
                    net(&inp)
                },
                batch,
            ),
        }
    }

    /// `v(x)` (terminal) or `v(t, x)` (full, `t` first).
    pub fn eval(&self, theta: &[f64], input: &[f64]) -> Result<f64> {
        Ok(self.net.apply(theta, input)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::solvers::heat::{heat_exact, HeatData};

    fn spec(v: KolmogorovVariant) -> KolmogorovSpec {
        KolmogorovSpec::new(1, 1.0, 0.5, v).unwrap()
    }

    #[test]
    fn trivial_losses() {
        let mut r = RngState::new(0);
        let s = spec(KolmogorovVariant::Terminal);
        let b = KolmogorovBatch::sample(&s, XiLaw::Normal, 100, &mut r).unwrap();
        assert_eq!(kolmogorov_terminal_loss(&s, |_| 0.0, |_| 0.0, &b).unwrap(), 0.0);
        let f = spec(KolmogorovVariant::Full);
        let b = KolmogorovBatch::sample(&f, XiLaw::Normal, 100, &mut r).unwrap();
        assert_eq!(kolmogorov_full_loss(&f, |_| 2.0, |_, _| 2.0, &b).unwrap(), 0.0);
        let mut b0 = b.clone();
        b0.tau = Some(vec![0.0; 100]);
        let l = kolmogorov_full_loss(&f, |x| x[0] * x[0], |_, x| x[0], &b0).unwrap();
        let want = b0.xi.iter().map(|x| (x * x - x).powi(2)).sum::<f64>() / 100.0;
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn identity_residual_is_scaled_normal() {
        let mut r = RngState::new(1);
        let s = spec(KolmogorovVariant::Terminal);
        let k = 100_000;
        let b = KolmogorovBatch::sample(&s, XiLaw::Normal, k, &mut r).unwrap();
        let l = kolmogorov_terminal_loss(&s, |x| x[0], |x| x[0], &b).unwrap();
        let vr2 = s.varrho().powi(2);
        assert!((l - vr2).abs() < 4.0 * vr2 * (2.0 / k as f64).sqrt());
    }

    #[test]
    fn exact_solution_minimizes() {
        let mut r = RngState::new(2);
        let s = spec(KolmogorovVariant::Terminal);
        let b = KolmogorovBatch::sample(&s, XiLaw::Normal, 100_000, &mut r).unwrap();
        let phi = |x: &[f64]| x[0] * x[0];
        let exact = |x: &[f64]| s.exact(&HeatData::Quadratic, 1.0, x).unwrap();
        let l0 = kolmogorov_terminal_loss(&s, phi, exact, &b).unwrap();
        let l1 = kolmogorov_terminal_loss(&s, phi, |x| exact(x) + 0.1, &b).unwrap();
        // l1 − l0 = 0.01 − 0.2·mean(residual); the residual has variance E[4ξ² + 2] = 6
        let sd = 0.2 * (6.0f64 / 100_000.0).sqrt();
        assert!(l0 < l1);
        assert!((l1 - l0 - 0.01).abs() < 3.0 * sd, "{l0} {l1}");
    }

    #[test]
    fn full_loss_matches_nested_variance() {
        let mut r = RngState::new(3);
        let f = spec(KolmogorovVariant::Full);
        let k = 20_000;
        let b = KolmogorovBatch::sample(&f, XiLaw::Normal, k, &mut r).unwrap();
        let phi = |x: &[f64]| (2.0 * x[0]).sin();
        let vr = f.varrho();
        let data = HeatData::Periodic { lengths: vec![std::f64::consts::PI], modes: vec![(vec![1], 0.0, -1.0)] };
        let exact = |t: f64, x: &[f64]| heat_exact(vr, &data, t, x).unwrap();
        let per: Vec<f64> = {
            let y = b.targets(&f, phi).unwrap();
            let tau = b.tau.as_ref().unwrap();
            (0..k).map(|i| (y[i] - exact(tau[i], &b.xi[i..i + 1])).powi(2)).collect()
        };
        let loss = kolmogorov_full_loss(&f, phi, exact, &b).unwrap();
        // nested MC estimate of E[Var(φ(ξ+ϱ√τ𝔹) | τ, ξ)]
        let mut inner = RngState::new(4);
        let tau = b.tau.as_ref().unwrap();
        let outer = 2000;
        let mut acc = 0.0;
        for i in 0..outer {
            let z = gauss_sample(&mut inner, 200);
            let vals: Vec<f64> = z.iter().map(|z| phi(&[b.xi[i] + vr * tau[i].sqrt() * z])).collect();
            let m = vals.iter().sum::<f64>() / 200.0;
            acc += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 199.0;
        }
        let nested = acc / outer as f64;
        let mean = per.iter().sum::<f64>() / k as f64;
        let sd = (per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt();
        let sd_nested = 0.5 / (outer as f64).sqrt();
        assert!((loss - nested).abs() < 3.0 * (sd * sd + sd_nested * sd_nested).sqrt(), "{loss} {nested}");
    }

    #[test]
    fn tape_loss_gradient() {
        let mut r = RngState::new(5);
        for v in [KolmogorovVariant::Terminal, KolmogorovVariant::Full] {
            let s = KolmogorovSpec::new(2, 1.0, 0.5, v).unwrap();
            let din = 2 + usize::from(v == KolmogorovVariant::Full);
            let m = KolmogorovModel::new(s, MlpArchitecture::new(vec![din, 6, 1], Activation::Tanh).unwrap()).unwrap();
            let theta = m.net.init(&mut r).values;
            let b = KolmogorovBatch::sample(&s, XiLaw::Uniform { lo: -1.0, hi: 1.0 }, 16, &mut r).unwrap();
            let phi = |x: &[f64]| x[0] * x[1] + x[0].cos();
            let (l, g) = m.loss_and_grad(&theta, phi, &b).unwrap();
            assert!((l - m.loss(&theta, phi, &b).unwrap()).abs() < 1e-12);
            let err = crate::autodiff::directional_gradient_check(&theta, &g, |th| m.loss(th, phi, &b), 20, 1e-5, &mut r).unwrap();
            assert!(err < 1e-5, "{err}");
        }
    }
}
