use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::grid::{flatten_index, mod_index, multi_index};
use crate::operators::{glorot, grid_coords, point_features};
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// Integral kernel neural operator with `ν_x` the Lebesgue measure on the
/// periodic ball of radius `r` around `x`, discretized by grid quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IknoOperator {
    pub extents: Vec<usize>,
    pub width: usize,
    pub layers: usize,
    /// Quadrature radius in unit-cube coordinates.
    pub radius: f64,
    pub lift_hidden: Vec<usize>,
    pub kernel_hidden: Vec<usize>,
    pub proj_hidden: Vec<usize>,
    pub activation: Activation,
}

impl IknoOperator {
    pub fn new(extents: Vec<usize>, width: usize, layers: usize, radius: f64, activation: Activation) -> Result<Self> {
        let s = IknoOperator {
            extents,
            width,
            layers,
            radius,
            lift_hidden: vec![2 * width],
            kernel_hidden: vec![2 * width],
            proj_hidden: vec![2 * width],
            activation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.layers == 0 || self.extents.is_empty() || self.extents.contains(&0) {
            return invalid("width, length and extents must be positive");
        }
        if !(self.radius > 0.0) {
            return invalid("quadrature radius must be positive");
        }
        if self.offsets().len() < 2 {
            return invalid(format!("radius {} is smaller than one grid cell", self.radius));
        }
        self.lift()?;
        self.kernel()?;
        self.proj()?;
        Ok(())
    }

    pub fn lift(&self) -> Result<MlpArchitecture> {
        let mut w = vec![self.extents.len() + 1];
        w.extend_from_slice(&self.lift_hidden);
        w.push(self.width);
        MlpArchitecture::new(w, self.activation)
    }

    /// `𝒦` on `(x, y, f(x), f(y))` with `n×n` outputs.
    pub fn kernel(&self) -> Result<MlpArchitecture> {
        let mut w = vec![2 * self.extents.len() + 2];
        w.extend_from_slice(&self.kernel_hidden);
        w.push(self.width * self.width);
        MlpArchitecture::new(w, self.activation)
    }

    pub fn proj(&self) -> Result<MlpArchitecture> {
        let mut w = vec![self.width];
        w.extend_from_slice(&self.proj_hidden);
        w.push(1);
        MlpArchitecture::new(w, self.activation)
    }

    /// Integer offsets of grid nodes within periodic distance `r`, each
    /// distinct node counted once.
    pub fn offsets(&self) -> Vec<Vec<i64>> {
        let d = self.extents.len();
        let ranges: Vec<(i64, i64)> = self
            .extents
            .iter()
            .map(|&a| {
                let a = a as i64;
                (-((a - 1) / 2), a / 2)
            })
            .collect();
        let span: Vec<usize> = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as usize).collect();
        let total: usize = span.iter().product();
        let mut out = Vec::new();
        for i in 0..total {
            let ii = multi_index(i, &span);
            let o: Vec<i64> = (0..d).map(|ax| ranges[ax].0 + ii[ax] as i64).collect();
            let dist2: f64 = o.iter().zip(&self.extents).map(|(&v, &a)| (v as f64 / a as f64).powi(2)).sum();
            if dist2 <= self.radius * self.radius + 1e-12 {
                out.push(o);
            }
        }
        out
    }

    pub fn cell_volume(&self) -> f64 {
        self.extents.iter().map(|&a| 1.0 / a as f64).product()
    }

    fn layer_size(&self) -> usize {
        self.width * self.width + self.kernel().map(|k| k.param_count()).unwrap_or(0)
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.lift().map(|m| m.param_count()).unwrap_or(0) + l * self.layer_size()
    }

    pub fn param_count(&self) -> usize {
        self.layer_offset(self.layers) + self.proj().map(|m| m.param_count()).unwrap_or(0)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let lift = self.lift().expect("validated");
        lift.init_into(rng, &mut p.values[..lift.param_count()]);
        let kern = self.kernel().expect("validated");
        let nn = self.width * self.width;
        for l in 0..self.layers {
            let s = self.layer_offset(l);
            glorot(rng, &mut p.values[s..s + nn], self.width, self.width);
            kern.init_into(rng, &mut p.values[s + nn..s + self.layer_size()]);
        }
        let s = self.layer_offset(self.layers);
        self.proj().expect("validated").init_into(rng, &mut p.values[s..]);
        p
    }

    /// Neighbour rows and kernel features for a batch.
    fn stencil(&self, x: &Tensor) -> (Vec<usize>, Tensor) {
        let d = self.extents.len();
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let offs = self.offsets();
        let coords = grid_coords(&self.extents);
        let mut nbr = Vec::with_capacity(p * offs.len());
        for i in 0..p {
            let ii = multi_index(i, &self.extents);
            for o in &offs {
                let jj: Vec<usize> = (0..d).map(|ax| mod_index(ii[ax] as i64 + o[ax], self.extents[ax])).collect();
                nbr.push(flatten_index(&jj, &self.extents));
            }
        }
        let s = offs.len();
        let mut rows = Vec::with_capacity(b * p * s);
        let mut feats = Vec::with_capacity(b * p * s * (2 * d + 2));
        let f = x.data();
        for bi in 0..b {
            for i in 0..p {
                for q in 0..s {
                    let j = nbr[i * s + q];
                    rows.push(bi * p + j);
                    feats.extend_from_slice(&coords[i * d..(i + 1) * d]);
                    feats.extend_from_slice(&coords[j * d..(j + 1) * d]);
                    feats.push(f[bi * p + i]);
                    feats.push(f[bi * p + j]);
                }
            }
        }
        (rows, Tensor::raw(vec![b * p * s, 2 * d + 2], feats))
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let n = self.width;
        let s = self.offsets().len();
        let (rows, feats) = self.stencil(x);
        let rows = Rc::new(rows);
        let feats = t.constant(feats);
        let pf = t.constant(point_features(&self.extents, x));
        let mut v = self.lift()?.forward(t, theta, 0, pf)?;
        let kern = self.kernel()?;
        for l in 0..self.layers {
            let off = self.layer_offset(l);
            let w = t.slice(theta, off, &[n, n])?;
            let lin = t.matmul_nt(v, w)?;
            let k = kern.forward(t, theta, off + n * n, feats)?;
            let vn = t.gather_rows(v, rows.clone())?;
            let kv = t.batched_matvec(k, vn)?;
            let integral = t.segment_sum(kv, s)?;
            let integral = t.scale(integral, self.cell_volume())?;
            let z = t.add(lin, integral)?;
            v = t.act(z, self.activation, 0)?;
        }
        let y = self.proj()?.forward(t, theta, self.layer_offset(self.layers), v)?;
        t.reshape(y, &[b, p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{testutil::check_param_gradient, OperatorSpec};
    use crate::rng::gauss_sample;

    fn bare(extents: Vec<usize>, width: usize, radius: f64) -> IknoOperator {
        IknoOperator {
            extents,
            width,
            layers: 1,
            radius,
            lift_hidden: vec![],
            kernel_hidden: vec![],
            proj_hidden: vec![],
            activation: Activation::Identity,
        }
    }

    #[test]
    fn stencil_sizes() {
        assert_eq!(bare(vec![8], 1, 0.25).offsets().len(), 5);
        assert_eq!(bare(vec![8], 1, 1.0).offsets().len(), 8);
        assert_eq!(bare(vec![8, 8], 1, 0.125).offsets().len(), 5);
        assert!(bare(vec![8], 1, 0.1).validate().is_err());
    }

    #[test]
    fn zero_kernel_is_pointwise() {
        let op = IknoOperator::new(vec![8], 2, 1, 0.25, Activation::Tanh).unwrap();
        let mut r = RngState::new(3);
        let mut th = gauss_sample(&mut r, op.param_count());
        let nn = 4;
        let s = op.layer_offset(0) + nn;
        let kl = op.kernel().unwrap();
        // zero the kernel's last layer so 𝒦 ≡ 0
        let k_last = s + kl.offset(kl.depth() - 1);
        th[k_last..s + kl.param_count()].iter_mut().for_each(|v| *v = 0.0);
        let x = gauss_sample(&mut r, 8);
        let got = OperatorSpec::Ikno(op.clone()).apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap();
        let lift = op.lift().unwrap();
        let proj = op.proj().unwrap();
        for i in 0..8 {
            let v0 = lift.apply(&th[..lift.param_count()], &[i as f64 / 8.0, x[i]]).unwrap();
            let w = &th[op.layer_offset(0)..op.layer_offset(0) + 4];
            let v1: Vec<f64> = (0..2).map(|o| (w[o * 2] * v0[0] + w[o * 2 + 1] * v0[1]).tanh()).collect();
            let want = proj.apply(&th[op.layer_offset(1)..], &v1).unwrap()[0];
            assert!((got.data()[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_field_quadrature() {
        // 𝒦 ≡ 1/|ball|, constant v₀: the integral term equals v₀ up to quadrature error
        let op = bare(vec![64], 1, 0.25);
        let mut th = vec![0.0; op.param_count()];
        th[2] = 0.7; // lifting bias: v₀ ≡ 0.7
        let s = op.layer_offset(0);
        th[s] = 0.0; // W
        th[s + 1 + 4] = 1.0 / 0.5; // kernel bias; the ball has length 0.5
        th[op.layer_offset(1)] = 1.0; // projection weight
        let y = OperatorSpec::Ikno(op).apply_batch(&th, &Tensor::from_vec(vec![0.3; 64])).unwrap();
        // 33 nodes of volume 1/64 against the exact length 0.5
        for v in y.data() {
            assert!((v - 0.7).abs() < 0.7 * (33.0 / 32.0 - 1.0) + 1e-12);
        }
    }

    #[test]
    fn matches_double_loop() {
        let op = IknoOperator::new(vec![8], 2, 1, 0.25, Activation::Tanh).unwrap();
        let mut r = RngState::new(21);
        let th = gauss_sample(&mut r, op.param_count());
        let x = gauss_sample(&mut r, 8);
        let lift = op.lift().unwrap();
        let kern = op.kernel().unwrap();
        let proj = op.proj().unwrap();
        let s0 = op.layer_offset(0);
        let v0: Vec<Vec<f64>> = (0..8).map(|i| lift.apply(&th[..lift.param_count()], &[i as f64 / 8.0, x[i]]).unwrap()).collect();
        for i in 0..8 {
            let mut z = vec![0.0; 2];
            for o in 0..2 {
                z[o] = th[s0 + o * 2] * v0[i][0] + th[s0 + o * 2 + 1] * v0[i][1];
            }
            for j in 0..8usize {
                let dist = ((i as i64 - j as i64).rem_euclid(8)).min((j as i64 - i as i64).rem_euclid(8));
                if dist > 2 {
                    continue;
                }
                let k = kern
                    .apply(&th[s0 + 4..s0 + 4 + kern.param_count()], &[i as f64 / 8.0, j as f64 / 8.0, x[i], x[j]])
                    .unwrap();
                for o in 0..2 {
                    z[o] += (k[o * 2] * v0[j][0] + k[o * 2 + 1] * v0[j][1]) / 8.0;
                }
            }
            let v1: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let want = proj.apply(&th[op.layer_offset(1)..], &v1).unwrap()[0];
            let got = OperatorSpec::Ikno(op.clone()).apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap();
            assert!((got.data()[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_check() {
        let op = IknoOperator::new(vec![4, 4], 2, 2, 0.3, Activation::Gelu).unwrap();
        check_param_gradient(&OperatorSpec::Ikno(op), 2, 8);
    }
}
