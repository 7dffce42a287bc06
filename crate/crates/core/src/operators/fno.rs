use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::autodiff::{SparseMap, Tape, Var};
use crate::error::{invalid, Result};
use crate::fourier::SpectralPlan;
use crate::grid::multi_index;
use crate::operators::{glorot, point_features};
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// Discretized Fourier neural operator.
///
/// With `real = true` the hidden functions are real, `W_l` is real and the
/// multipliers satisfy `R_l(k) = conj(R_l(−k))`; only the free real
/// coordinates are stored. Otherwise the hidden functions are complex,
/// stored as `2n` real channels `[re; im]`, and the activation acts on real
/// and imaginary parts separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnoOperator {
    pub extents: Vec<usize>,
    pub width: usize,
    pub layers: usize,
    /// Retained modes `K` per axis (signed frequencies `−K/2 … K/2`).
    pub modes: usize,
    pub lift_hidden: Vec<usize>,
    pub proj_hidden: Vec<usize>,
    pub activation: Activation,
    pub real: bool,
}

impl FnoOperator {
    pub fn new(extents: Vec<usize>, width: usize, layers: usize, modes: usize, activation: Activation, real: bool) -> Result<Self> {
        let s = FnoOperator {
            extents,
            width,
            layers,
            modes,
            lift_hidden: vec![2 * width],
            proj_hidden: vec![2 * width],
            activation,
            real,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.layers == 0 || self.modes == 0 {
            return invalid("width, length and modes must be positive");
        }
        if self.extents.is_empty() || self.extents.iter().any(|&m| m < self.modes) {
            return invalid(format!("grid {:?} is coarser than {} modes", self.extents, self.modes));
        }
        self.lift()?;
        self.proj()?;
        Ok(())
    }

    fn hidden(&self) -> usize {
        if self.real {
            self.width
        } else {
            2 * self.width
        }
    }

    fn n_modes(&self) -> usize {
        self.modes.pow(self.extents.len() as u32)
    }

    pub fn lift(&self) -> Result<MlpArchitecture> {
        let mut w = vec![self.extents.len() + 1];
        w.extend_from_slice(&self.lift_hidden);
        w.push(self.hidden());
        MlpArchitecture::new(w, self.activation)
    }

    pub fn proj(&self) -> Result<MlpArchitecture> {
        let mut w = vec![self.hidden()];
        w.extend_from_slice(&self.proj_hidden);
        w.push(1);
        MlpArchitecture::new(w, self.activation)
    }

    fn w_size(&self) -> usize {
        if self.real {
            self.width * self.width
        } else {
            2 * self.width * self.width
        }
    }

    /// Free real parameters of one `R_l`.
    pub fn r_size(&self) -> usize {
        let per = self.width * self.width * self.n_modes();
        if self.real {
            per
        } else {
            2 * per
        }
    }

    fn layer_size(&self) -> usize {
        self.w_size() + self.r_size()
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
        let scale = 1.0 / self.width as f64;
        for l in 0..self.layers {
            let s = self.layer_offset(l);
            glorot(rng, &mut p.values[s..s + self.w_size()], self.width, self.width);
            for v in &mut p.values[s + self.w_size()..s + self.layer_size()] {
                *v = scale * (2.0 * rng.next_f64() - 1.0);
            }
        }
        let s = self.layer_offset(self.layers);
        self.proj().expect("validated").init_into(rng, &mut p.values[s..]);
        p
    }

    /// Map from the free coordinates of `R_l` to the `[2, n, n, K^d]` planes.
    pub fn r_map(&self) -> SparseMap {
        let n = self.width;
        let nm = self.n_modes();
        let plane = n * n * nm;
        let mut entries = Vec::new();
        if !self.real {
            for i in 0..2 * plane {
                entries.push((i, i, 1.0));
            }
        } else {
            let d = self.extents.len();
            let mext = vec![self.modes; d];
            let partner = |k: usize| {
                let kk = multi_index(k, &mext);
                kk.iter().fold(0, |acc, &v| acc * self.modes + (self.modes - v) % self.modes)
            };
            let mut free = 0;
            for oc in 0..n * n {
                for k in 0..nm {
                    let kp = partner(k);
                    let re = oc * nm + k;
                    let rep = oc * nm + kp;
                    if k == kp {
                        entries.push((re, free, 1.0));
                        free += 1;
                    } else if k < kp {
                        entries.push((re, free, 1.0));
                        entries.push((rep, free, 1.0));
                        entries.push((plane + re, free + 1, 1.0));
                        entries.push((plane + rep, free + 1, -1.0));
                        free += 2;
                    }
                }
            }
            debug_assert_eq!(free, self.r_size());
        }
        SparseMap { out_shape: vec![2 * plane], in_len: self.r_size(), entries }
    }

    /// Map from `W_l` coordinates to the dense channel matrix acting on the
    /// stored hidden channels.
    fn w_map(&self) -> SparseMap {
        let n = self.width;
        let h = self.hidden();
        let mut entries = Vec::new();
        if self.real {
            for i in 0..n * n {
                entries.push((i, i, 1.0));
            }
        } else {
            for o in 0..n {
                for c in 0..n {
                    let wr = o * n + c;
                    let wi = n * n + wr;
                    entries.push((o * h + c, wr, 1.0));
                    entries.push(((n + o) * h + n + c, wr, 1.0));
                    entries.push((o * h + n + c, wi, -1.0));
                    entries.push(((n + o) * h + c, wi, 1.0));
                }
            }
        }
        SparseMap { out_shape: vec![h, h], in_len: self.w_size(), entries }
    }

    pub fn plan(&self) -> Result<SpectralPlan> {
        SpectralPlan::new(&self.extents, self.modes, self.width, self.width, !self.real)
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let h = self.hidden();
        let plan = Rc::new(self.plan()?);
        let rmap = Rc::new(self.r_map());
        let wmap = Rc::new(self.w_map());
        let feats = t.constant(point_features(&self.extents, x));
        let mut v = self.lift()?.forward(t, theta, 0, feats)?;
        v = t.transpose(v, b, p, h)?;
        let mut shape = vec![b, h];
        shape.extend_from_slice(&self.extents);
        v = t.reshape(v, &shape)?;
        for l in 0..self.layers {
            let s = self.layer_offset(l);
            let wfree = t.slice(theta, s, &[self.w_size()])?;
            let w = t.sparse_linear(wfree, wmap.clone())?;
            let rfree = t.slice(theta, s + self.w_size(), &[self.r_size()])?;
            let r = t.sparse_linear(rfree, rmap.clone())?;
            let lin = t.channel_mix(v, w)?;
            let spec = t.spectral(v, r, plan.clone())?;
            let z = t.add(lin, spec)?;
            v = t.act(z, self.activation, 0)?;
        }
        v = t.transpose(v, b, h, p)?;
        v = t.reshape(v, &[b * p, h])?;
        let y = self.proj()?.forward(t, theta, self.layer_offset(self.layers), v)?;
        t.reshape(y, &[b, p])
    }

    /// Largest imaginary part discarded by the spectral layers of the real
    /// variant on one input.
    pub fn imag_residue(&self, theta: &[f64], x: &Tensor) -> Result<f64> {
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let h = self.hidden();
        let plan = self.plan()?;
        let rmap = self.r_map();
        let mut t = Tape::new();
        let th = t.constant(Tensor::from_vec(theta.to_vec()));
        let feats = t.constant(point_features(&self.extents, x));
        let mut v = self.lift()?.forward(&mut t, th, 0, feats)?;
        v = t.transpose(v, b, p, h)?;
        let mut worst = 0.0f64;
        for l in 0..self.layers {
            let s = self.layer_offset(l) + self.w_size();
            let mut r = vec![0.0; 2 * self.width * self.width * self.n_modes()];
            for &(dst, src, c) in &rmap.entries {
                r[dst] += c * theta[s + src];
            }
            worst = worst.max(plan.imag_residue(t.value(v).data(), &r, b));
            let wfree = t.slice(th, self.layer_offset(l), &[self.w_size()])?;
            let w = t.sparse_linear(wfree, Rc::new(self.w_map()))?;
            let rv = t.constant(Tensor::from_vec(r));
            let mut shape = vec![b, h];
            shape.extend_from_slice(&self.extents);
            let vv = t.reshape(v, &shape)?;
            let lin = t.channel_mix(vv, w)?;
            let sp = t.spectral(vv, rv, Rc::new(plan.clone()))?;
            let z = t.add(lin, sp)?;
            v = t.act(z, self.activation, 0)?;
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{testutil::check_param_gradient, OperatorSpec};
    use crate::rng::gauss_sample;

    /// One-channel FNO whose lifting returns f(x) and projection is identity.
    fn plain(extents: Vec<usize>, modes: usize, real: bool) -> FnoOperator {
        FnoOperator {
            extents,
            width: 1,
            layers: 1,
            modes,
            lift_hidden: vec![],
            proj_hidden: vec![],
            activation: Activation::Identity,
            real,
        }
    }

    fn plain_params(op: &FnoOperator, w: f64, r_re: f64) -> Vec<f64> {
        let d = op.extents.len();
        let mut th = vec![0.0; op.param_count()];
        th[d] = 1.0; // lift: weight on f(x)
        let s = op.layer_offset(0);
        th[s] = w;
        let rs = s + op.w_size();
        if op.real {
            // free coordinates: a real entry for self-conjugate modes, (re, im) otherwise
            let mext = vec![op.modes; d];
            let mut free = 0;
            for k in 0..op.n_modes() {
                let kk = multi_index(k, &mext);
                let kp = kk.iter().fold(0, |a, &v| a * op.modes + (op.modes - v) % op.modes);
                if k <= kp {
                    th[rs + free] = r_re;
                    free += if k == kp { 1 } else { 2 };
                }
            }
        } else {
            for k in 0..op.n_modes() {
                th[rs + k] = r_re;
            }
        }
        let q = op.layer_offset(1);
        th[q] = 1.0;
        th
    }

    #[test]
    fn identity_pointwise_layer() {
        for real in [true, false] {
            let op = plain(vec![8], 8, real);
            let th = plain_params(&op, 1.0, 0.0);
            let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).cos()).collect();
            let y = OperatorSpec::Fno(op).apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap();
            for (a, b) in y.data().iter().zip(&x) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_multiplier_round_trip() {
        for real in [true, false] {
            let op = plain(vec![8, 8], 8, real);
            let th = plain_params(&op, 0.0, 1.0);
            let mut r = RngState::new(6);
            let x = gauss_sample(&mut r, 64);
            let y = OperatorSpec::Fno(op).apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap();
            for (a, b) in y.data().iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn real_constraint_keeps_fields_real() {
        for (ext, modes) in [(vec![8], 8), (vec![16], 6), (vec![8, 8], 4), (vec![6, 6], 5)] {
            let op = FnoOperator::new(ext.clone(), 3, 2, modes, Activation::Gelu, true).unwrap();
            let mut r = RngState::new(12);
            let th = gauss_sample(&mut r, op.param_count());
            let p: usize = ext.iter().product();
            let x = Tensor::new(vec![2, p], gauss_sample(&mut r, 2 * p)).unwrap();
            assert!(op.imag_residue(&th, &x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn free_parameters_span_the_constrained_space() {
        // the image of the free coordinates is exactly {R : R(k) = conj(R(−k))}
        for (d, modes) in [(1, 4), (1, 5), (2, 4), (2, 3)] {
            let op = FnoOperator::new(vec![8; d], 1, 1, modes, Activation::Tanh, true).unwrap();
            let nm = op.n_modes();
            let map = op.r_map();
            let cols = op.r_size();
            let mut mat = vec![vec![0.0; cols]; 2 * nm];
            for &(dst, src, c) in &map.entries {
                mat[dst][src] += c;
            }
            // rank by Gaussian elimination
            let mut rank = 0;
            let mut m = mat.clone();
            for col in 0..cols {
                if let Some(piv) = (rank..2 * nm).find(|&r| m[r][col].abs() > 1e-12) {
                    m.swap(rank, piv);
                    for r in 0..2 * nm {
                        if r != rank {
                            let f = m[r][col] / m[rank][col];
                            for c in 0..cols {
                                m[r][c] -= f * m[rank][c];
                            }
                        }
                    }
                    rank += 1;
                }
            }
            assert_eq!(rank, cols);
            // dimension of the constrained space: one per self-conjugate mode, two per conjugate pair
            let mext = vec![modes; d];
            let selfc = (0..nm)
                .filter(|&k| multi_index(k, &mext).iter().all(|&v| (modes - v) % modes == v))
                .count();
            assert_eq!(cols, selfc + 2 * ((nm - selfc) / 2));
            // every image vector satisfies the constraint
            for col in 0..cols {
                for k in 0..nm {
                    let kk = multi_index(k, &mext);
                    let kp = kk.iter().fold(0, |a, &v| a * modes + (modes - v) % modes);
                    assert_eq!(mat[k][col], mat[kp][col]);
                    assert_eq!(mat[nm + k][col], -mat[nm + kp][col]);
                }
            }
        }
    }

    #[test]
    fn band_limited_resolution_consistency() {
        // affine lifting without coordinate dependence, one layer
        let mut op = FnoOperator::new(vec![8], 2, 1, 8, Activation::Tanh, true).unwrap();
        op.lift_hidden.clear();
        op.proj_hidden.clear();
        let mut r = RngState::new(3);
        let mut th = gauss_sample(&mut r, op.param_count());
        th[0] = 0.0; // coordinate weights of the lifting
        th[2] = 0.0;
        let f = |x: f64| 0.3 + (2.0 * std::f64::consts::PI * x).sin() - 0.5 * (6.0 * std::f64::consts::PI * x).cos();
        let coarse: Vec<f64> = (0..8).map(|i| f(i as f64 / 8.0)).collect();
        let fine: Vec<f64> = (0..16).map(|i| f(i as f64 / 16.0)).collect();
        let y8 = OperatorSpec::Fno(op.clone()).apply_batch(&th, &Tensor::from_vec(coarse)).unwrap();
        let op16 = FnoOperator { extents: vec![16], ..op };
        let y16 = OperatorSpec::Fno(op16).apply_batch(&th, &Tensor::from_vec(fine)).unwrap();
        for i in 0..8 {
            assert!((y8.data()[i] - y16.data()[2 * i]).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_check() {
        let op = FnoOperator::new(vec![8], 2, 2, 4, Activation::Gelu, true).unwrap();
        check_param_gradient(&OperatorSpec::Fno(op), 2, 4);
        let op = FnoOperator::new(vec![4, 4], 2, 1, 3, Activation::Tanh, false).unwrap();
        check_param_gradient(&OperatorSpec::Fno(op), 2, 5);
    }
}
