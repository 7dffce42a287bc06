//! Discretized Fourier transform pair and the spectral convolution kernel.
//!
//! `dft_n` uses the normalized forward sum `(1/N^d) Σ_r f(r/N) e^{-2πi⟨k,r⟩/N}`
//! and `idft` the unnormalized trigonometric sum, so `idft(dft(f)) = f` on the
//! grid.

use crate::error::{invalid, shape, Result};
use crate::grid::{multi_index, strides};
use crate::tensor::Tensor;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

pub use rustfft::num_complex::Complex64 as C64;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, inverse)) {
            return f.clone();
        }
        let f = if inverse { p.0.plan_fft_inverse(n) } else { p.0.plan_fft_forward(n) };
        p.1.insert((n, inverse), f.clone());
        f
    })
}

/// In-place unnormalized n-d FFT over a row-major array with extents `ext`.
/// The forward transform uses `e^{-2πi…}`, the inverse `e^{+2πi…}`.
pub fn fft_nd(data: &mut [Complex64], ext: &[usize], inverse: bool) {
    let total: usize = ext.iter().product();
    assert_eq!(data.len() % total.max(1), 0);
    let st = strides(ext);
    for (ax, &n) in ext.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let f = plan(n, inverse);
        let stride = st[ax];
        if stride == 1 {
            f.process(data);
            continue;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let block = n * stride;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for j in 0..n {
                    line[j] = data[start + off + j * stride];
                }
                f.process(&mut line);
                for j in 0..n {
                    data[start + off + j * stride] = line[j];
                }
            }
        }
    }
}

/// Complex coefficients on `{0,…,N−1}^d`, stored as separate real and
/// imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoeffs {
    pub re: Tensor,
    pub im: Tensor,
}

impl FourierCoeffs {
    pub fn n(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn dims(&self) -> usize {
        self.re.shape().len()
    }

    pub fn get(&self, flat: usize) -> Complex64 {
        Complex64::new(self.re.data()[flat], self.im.data()[flat])
    }

    fn from_complex(ext: &[usize], v: &[Complex64]) -> Self {
        FourierCoeffs {
            re: Tensor::raw(ext.to_vec(), v.iter().map(|c| c.re).collect()),
            im: Tensor::raw(ext.to_vec(), v.iter().map(|c| c.im).collect()),
        }
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.re.data().iter().zip(self.im.data()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

fn check_cubic(ext: &[usize], n: usize) -> Result<()> {
    if ext.iter().any(|&e| e != n) {
        return shape(format!("grid extents {ext:?} are not all equal to N = {n}"));
    }
    Ok(())
}

/// DFT_N of grid values on `[0,1]^d` (fast path).
pub fn dft_n(f: &Tensor, n: usize) -> Result<FourierCoeffs> {
    check_cubic(f.shape(), n)?;
    let mut v: Vec<Complex64> = f.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_nd(&mut v, f.shape(), false);
    let scale = 1.0 / f.len() as f64;
    v.iter_mut().for_each(|c| *c *= scale);
    Ok(FourierCoeffs::from_complex(f.shape(), &v))
}

/// DFT_N by the defining sum; O(N^{2d}).
pub fn dft_naive(f: &Tensor, n: usize) -> Result<FourierCoeffs> {
    check_cubic(f.shape(), n)?;
    let ext = f.shape();
    let p = f.len();
    let mut out = vec![Complex64::new(0.0, 0.0); p];
    for (k, o) in out.iter_mut().enumerate() {
        let kk = multi_index(k, ext);
        for r in 0..p {
            let rr = multi_index(r, ext);
            let dot: usize = kk.iter().zip(&rr).map(|(a, b)| a * b).sum::<usize>() % n;
            let ang = -2.0 * PI * dot as f64 / n as f64;
            *o += f.data()[r] * Complex64::new(ang.cos(), ang.sin());
        }
        *o /= p as f64;
    }
    Ok(FourierCoeffs::from_complex(ext, &out))
}

/// IDFT_N on the full grid `{r/N}` (fast path). Returns (re, im).
pub fn idft_grid(v: &FourierCoeffs) -> (Tensor, Tensor) {
    let ext = v.re.shape().to_vec();
    let mut c = v.to_complex();
    fft_nd(&mut c, &ext, true);
    let f = FourierCoeffs::from_complex(&ext, &c);
    (f.re, f.im)
}

/// IDFT_N by the defining sum on the grid.
pub fn idft_grid_naive(v: &FourierCoeffs) -> (Tensor, Tensor) {
    let ext = v.re.shape().to_vec();
    let p = v.re.len();
    let pts: Vec<Vec<f64>> = (0..p)
        .map(|r| multi_index(r, &ext).iter().map(|&i| i as f64 / ext[0] as f64).collect())
        .collect();
    let vals: Vec<Complex64> = pts.iter().map(|x| idft_point(v, x)).collect();
    let f = FourierCoeffs::from_complex(&ext, &vals);
    (f.re, f.im)
}

/// IDFT_N at an arbitrary point `x ∈ [0,1]^d`: `Σ_k v(k) e^{2πi⟨k,x⟩}`.
pub fn idft_point(v: &FourierCoeffs, x: &[f64]) -> Complex64 {
    let ext = v.re.shape();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..v.re.len() {
        let kk = multi_index(k, ext);
        let dot: f64 = kk.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
        let ang = 2.0 * PI * dot;
        acc += v.get(k) * Complex64::new(ang.cos(), ang.sin());
    }
    acc
}

/// Signed frequency of index `k` on an axis with `n` modes; the Nyquist index
/// `n/2` maps to `+n/2`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if 2 * k <= n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Spectral convolution `x ↦ IDFT(R · DFT(x))` with `R` defined on
/// `{0,…,N−1}^d` and the signal sampled on an `M^d` grid, `M ≥ N`.
///
/// For `M > N` the DFT is computed at resolution `M` and truncated to the
/// signed frequencies represented by the `N` modes; a Nyquist mode of `R` is
/// split evenly between `±N/2` so that conjugate-symmetric multipliers keep
/// real signals real. For `M = N` this is exactly the defining sums.
#[derive(Clone, Debug)]
pub struct SpectralPlan {
    pub grid: Vec<usize>,
    pub modes: usize,
    pub cin: usize,
    pub cout: usize,
    /// Hidden functions complex (channels stored as `[re…, im…]`) or real.
    pub complex_io: bool,
    /// `(mode index, grid index, weight)`.
    entries: Vec<(usize, usize, f64)>,
    n_modes: usize,
}

impl SpectralPlan {
    pub fn new(grid: &[usize], modes: usize, cin: usize, cout: usize, complex_io: bool) -> Result<Self> {
        let d = grid.len();
        if d == 0 {
            return invalid("spectral plan needs at least one axis");
        }
        if grid.iter().any(|&m| m < modes) {
            return shape(format!("grid {grid:?} is coarser than the {modes} spectral modes"));
        }
        let mext = vec![modes; d];
        let n_modes = modes.pow(d as u32);
        let gs = strides(grid);
        let mut entries = Vec::new();
        for k in 0..n_modes {
            let kk = multi_index(k, &mext);
            // per-axis list of (grid index, weight)
            let mut choices: Vec<Vec<(usize, f64)>> = Vec::with_capacity(d);
            for ax in 0..d {
                let m = grid[ax];
                let s = signed_freq(kk[ax], modes);
                if modes % 2 == 0 && 2 * kk[ax] == modes {
                    let h = (modes / 2) as i64;
                    choices.push(vec![
                        (h.rem_euclid(m as i64) as usize, 0.5),
                        ((-h).rem_euclid(m as i64) as usize, 0.5),
                    ]);
                } else {
                    choices.push(vec![(s.rem_euclid(m as i64) as usize, 1.0)]);
                }
            }
            let mut stack = vec![(0usize, 0usize, 1.0f64)];
            while let Some((ax, flat, w)) = stack.pop() {
                if ax == d {
                    entries.push((k, flat, w));
                    continue;
                }
                for &(g, cw) in &choices[ax] {
                    stack.push((ax + 1, flat + g * gs[ax], w * cw));
                }
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        Ok(SpectralPlan { grid: grid.to_vec(), modes, cin, cout, complex_io, entries, n_modes })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    fn points(&self) -> usize {
        self.grid.iter().product()
    }

    fn chans(&self, c: usize) -> usize {
        if self.complex_io {
            2 * c
        } else {
            c
        }
    }

    pub fn input_len(&self, batch: usize) -> usize {
        batch * self.chans(self.cin) * self.points()
    }

    pub fn weight_len(&self) -> usize {
        2 * self.cout * self.cin * self.n_modes
    }

    /// Retained spectrum `[batch, cin, n_modes]` of the input.
    fn analyze(&self, x: &[f64], batch: usize) -> Vec<Complex64> {
        let p = self.points();
        let ci = self.chans(self.cin);
        let scale = 1.0 / p as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); batch * self.cin * self.n_modes];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for b in 0..batch {
            for c in 0..self.cin {
                let re = &x[(b * ci + c) * p..(b * ci + c + 1) * p];
                if self.complex_io {
                    let im = &x[(b * ci + self.cin + c) * p..(b * ci + self.cin + c + 1) * p];
                    for j in 0..p {
                        buf[j] = Complex64::new(re[j], im[j]);
                    }
                } else {
                    for j in 0..p {
                        buf[j] = Complex64::new(re[j], 0.0);
                    }
                }
                fft_nd(&mut buf, &self.grid, false);
                let o = &mut out[(b * self.cin + c) * self.n_modes..(b * self.cin + c + 1) * self.n_modes];
                for &(k, g, w) in &self.entries {
                    o[k] += buf[g] * (w * scale);
                }
            }
        }
        out
    }

    /// Place retained coefficients `[batch, cout, n_modes]` on the grid and
    /// apply the inverse sum; returns real output channels.
    fn synthesize(&self, y: &[Complex64], batch: usize) -> Vec<f64> {
        let p = self.points();
        let co = self.chans(self.cout);
        let mut out = vec![0.0; batch * co * p];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for b in 0..batch {
            for o in 0..self.cout {
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                let yo = &y[(b * self.cout + o) * self.n_modes..(b * self.cout + o + 1) * self.n_modes];
                for &(k, g, w) in &self.entries {
                    buf[g] += yo[k] * w;
                }
                fft_nd(&mut buf, &self.grid, true);
                let dst = &mut out[(b * co + o) * p..(b * co + o + 1) * p];
                for j in 0..p {
                    dst[j] = buf[j].re;
                }
                if self.complex_io {
                    let dst = &mut out[(b * co + self.cout + o) * p..(b * co + self.cout + o + 1) * p];
                    for j in 0..p {
                        dst[j] = buf[j].im;
                    }
                }
            }
        }
        out
    }

    fn weight(&self, w: &[f64], o: usize, c: usize, k: usize) -> Complex64 {
        let half = self.cout * self.cin * self.n_modes;
        let i = (o * self.cin + c) * self.n_modes + k;
        Complex64::new(w[i], w[half + i])
    }

    /// Forward pass. `w` holds `[2, cout, cin, n_modes]` (real then imaginary
    /// planes). Returns the output and the retained input spectrum.
    pub fn forward(&self, x: &[f64], w: &[f64], batch: usize) -> (Vec<f64>, Vec<Complex64>) {
        let xs = self.analyze(x, batch);
        let nm = self.n_modes;
        let mut ys = vec![Complex64::new(0.0, 0.0); batch * self.cout * nm];
        for b in 0..batch {
            for o in 0..self.cout {
                let yo = &mut ys[(b * self.cout + o) * nm..(b * self.cout + o + 1) * nm];
                for c in 0..self.cin {
                    let xc = &xs[(b * self.cin + c) * nm..(b * self.cin + c + 1) * nm];
                    for k in 0..nm {
                        yo[k] += self.weight(w, o, c, k) * xc[k];
                    }
                }
            }
        }
        (self.synthesize(&ys, batch), xs)
    }

    /// Imaginary part that the real-valued forward pass discards; zero by
    /// construction in complex mode.
    pub fn imag_residue(&self, x: &[f64], w: &[f64], batch: usize) -> f64 {
        if self.complex_io {
            return 0.0;
        }
        let xs = self.analyze(x, batch);
        let nm = self.n_modes;
        let p = self.points();
        let mut worst = 0.0f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for b in 0..batch {
            for o in 0..self.cout {
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for &(k, g, wt) in &self.entries {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..self.cin {
                        acc += self.weight(w, o, c, k) * xs[(b * self.cin + c) * nm + k];
                    }
                    buf[g] += acc * wt;
                }
                fft_nd(&mut buf, &self.grid, true);
                worst = buf.iter().fold(worst, |a, c| a.max(c.im.abs()));
            }
        }
        worst
    }

    /// Adjoints with respect to input and weights given the output adjoint.
    pub fn backward(&self, gy: &[f64], xs: &[Complex64], w: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let p = self.points();
        let nm = self.n_modes;
        let co = self.chans(self.cout);
        let ci = self.chans(self.cin);
        // G_o(k) = Σ_e w · FFT(gy_o)(g_e)
        let mut gys = vec![Complex64::new(0.0, 0.0); batch * self.cout * nm];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for b in 0..batch {
            for o in 0..self.cout {
                let re = &gy[(b * co + o) * p..(b * co + o + 1) * p];
                if self.complex_io {
                    let im = &gy[(b * co + self.cout + o) * p..(b * co + self.cout + o + 1) * p];
                    for j in 0..p {
                        buf[j] = Complex64::new(re[j], im[j]);
                    }
                } else {
                    for j in 0..p {
                        buf[j] = Complex64::new(re[j], 0.0);
                    }
                }
                fft_nd(&mut buf, &self.grid, false);
                let dst = &mut gys[(b * self.cout + o) * nm..(b * self.cout + o + 1) * nm];
                for &(k, g, wt) in &self.entries {
                    dst[k] += buf[g] * wt;
                }
            }
        }
        let half = self.cout * self.cin * nm;
        let mut gw = vec![0.0; 2 * half];
        let mut gxs = vec![Complex64::new(0.0, 0.0); batch * self.cin * nm];
        for b in 0..batch {
            for o in 0..self.cout {
                let go = &gys[(b * self.cout + o) * nm..(b * self.cout + o + 1) * nm];
                for c in 0..self.cin {
                    let xc = &xs[(b * self.cin + c) * nm..(b * self.cin + c + 1) * nm];
                    let base = (o * self.cin + c) * nm;
                    for k in 0..nm {
                        let gr = go[k] * xc[k].conj();
                        gw[base + k] += gr.re;
                        gw[half + base + k] += gr.im;
                        gxs[(b * self.cin + c) * nm + k] += self.weight(w, o, c, k).conj() * go[k];
                    }
                }
            }
        }
        // back to the grid: h = (1/P) Σ_g GX(g) e^{+2πi g·x}
        let mut gx = vec![0.0; batch * ci * p];
        let scale = 1.0 / p as f64;
        for b in 0..batch {
            for c in 0..self.cin {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                let src = &gxs[(b * self.cin + c) * nm..(b * self.cin + c + 1) * nm];
                for &(k, g, wt) in &self.entries {
                    buf[g] += src[k] * (wt * scale);
                }
                fft_nd(&mut buf, &self.grid, true);
                let dst = &mut gx[(b * ci + c) * p..(b * ci + c + 1) * p];
                for j in 0..p {
                    dst[j] = buf[j].re;
                }
                if self.complex_io {
                    let dst = &mut gx[(b * ci + self.cin + c) * p..(b * ci + self.cin + c + 1) * p];
                    for j in 0..p {
                        dst[j] = buf[j].im;
                    }
                }
            }
        }
        (gx, gw)
    }
}

/// Spectral differentiation `∂^order/∂x_axis^order` of real periodic signals
/// laid out as `[rows, grid…]` on a domain of the given lengths. The Nyquist
/// mode is dropped for odd orders so the operator stays real and skew/self
/// adjoint.
#[derive(Clone, Debug)]
pub struct SpectralDiff {
    pub grid: Vec<usize>,
    pub multiplier: Vec<Complex64>,
}

impl SpectralDiff {
    pub fn new(grid: &[usize], lengths: &[f64], axis: usize, order: u32) -> Result<Self> {
        if axis >= grid.len() || lengths.len() != grid.len() {
            return shape("spectral derivative axis out of range");
        }
        let p: usize = grid.iter().product();
        let n = grid[axis];
        let mut multiplier = Vec::with_capacity(p);
        for i in 0..p {
            let k = multi_index(i, grid)[axis];
            let mut m = Complex64::new(0.0, 2.0 * PI * signed_freq(k, n) as f64 / lengths[axis]).powu(order);
            if order % 2 == 1 && n % 2 == 0 && 2 * k == n {
                m = Complex64::new(0.0, 0.0);
            }
            multiplier.push(m);
        }
        Ok(SpectralDiff { grid: grid.to_vec(), multiplier })
    }

    pub fn apply(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let p = self.multiplier.len();
        let mut out = vec![0.0; x.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for (src, dst) in x.chunks(p).zip(out.chunks_mut(p)) {
            for j in 0..p {
                buf[j] = Complex64::new(src[j], 0.0);
            }
            fft_nd(&mut buf, &self.grid, false);
            for j in 0..p {
                let m = if adjoint { self.multiplier[j].conj() } else { self.multiplier[j] };
                buf[j] *= m / p as f64;
            }
            fft_nd(&mut buf, &self.grid, true);
            for j in 0..p {
                dst[j] = buf[j].re;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gauss_sample, RngState};

    fn rand_tensor(ext: &[usize], seed: u64) -> Tensor {
        let n = ext.iter().product();
        Tensor::new(ext.to_vec(), gauss_sample(&mut RngState::new(seed), n)).unwrap()
    }

    #[test]
    fn constant_and_cosine() {
        let c = Tensor::filled(&[8], 3.0);
        let v = dft_n(&c, 8).unwrap();
        assert!((v.re.data()[0] - 3.0).abs() < 1e-14);
        assert!(v.re.data()[1..].iter().chain(v.im.data()).all(|x| x.abs() < 1e-14));
        let f = Tensor::raw(vec![8], (0..8).map(|r| (2.0 * PI * r as f64 / 8.0).cos()).collect());
        let v = dft_n(&f, 8).unwrap();
        for k in 0..8 {
            let want = if k == 1 || k == 7 { 0.5 } else { 0.0 };
            assert!((v.re.data()[k] - want).abs() < 1e-12);
            assert!(v.im.data()[k].abs() < 1e-12);
        }
        assert!(dft_n(&Tensor::zeros(&[8, 4]), 8).is_err());
    }

    #[test]
    fn idft_examples() {
        let mut re = Tensor::zeros(&[4]);
        re.data_mut()[0] = 1.0;
        let v = FourierCoeffs { re, im: Tensor::zeros(&[4]) };
        let (r, i) = idft_grid(&v);
        assert!(r.data().iter().all(|x| (x - 1.0).abs() < 1e-15) && i.data().iter().all(|x| x.abs() < 1e-15));
        let mut re = Tensor::zeros(&[4]);
        re.data_mut()[1] = 1.0;
        let v = FourierCoeffs { re, im: Tensor::zeros(&[4]) };
        let z = idft_point(&v, &[0.5]);
        assert!((z.re + 1.0).abs() < 1e-15 && z.im.abs() < 1e-15);
    }

    #[test]
    fn fft_matches_naive_2d_and_3d() {
        for ext in [vec![4, 4], vec![4, 4, 4], vec![6, 6]] {
            let f = rand_tensor(&ext, 5);
            let a = dft_n(&f, ext[0]).unwrap();
            let b = dft_naive(&f, ext[0]).unwrap();
            for i in 0..f.len() {
                assert!((a.re.data()[i] - b.re.data()[i]).abs() < 1e-12);
                assert!((a.im.data()[i] - b.im.data()[i]).abs() < 1e-12);
            }
            let (r1, i1) = idft_grid(&a);
            let (r2, i2) = idft_grid_naive(&a);
            for i in 0..f.len() {
                assert!((r1.data()[i] - r2.data()[i]).abs() < 1e-11);
                assert!((i1.data()[i] - i2.data()[i]).abs() < 1e-11);
                assert!((r1.data()[i] - f.data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity() {
        let f = rand_tensor(&[8], 1);
        let g = rand_tensor(&[8], 2);
        let h = Tensor::raw(vec![8], f.data().iter().zip(g.data()).map(|(a, b)| 2.0 * a - 0.5 * b).collect());
        let (vf, vg, vh) = (dft_n(&f, 8).unwrap(), dft_n(&g, 8).unwrap(), dft_n(&h, 8).unwrap());
        for k in 0..8 {
            assert!((vh.re.data()[k] - (2.0 * vf.re.data()[k] - 0.5 * vg.re.data()[k])).abs() < 1e-14);
            assert!((vh.im.data()[k] - (2.0 * vf.im.data()[k] - 0.5 * vg.im.data()[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_constant() {
        for n in [4usize, 8, 16] {
            for d in 1..3 {
                let ext = vec![n; d];
                let f = rand_tensor(&ext, n as u64 + d as u64);
                let v = dft_n(&f, n).unwrap();
                let lhs: f64 = f.data().iter().map(|x| x * x).sum::<f64>();
                let coeff: f64 = v.re.data().iter().zip(v.im.data()).map(|(a, b)| a * a + b * b).sum();
                let nd = (n as f64).powi(d as i32);
                assert!((lhs - nd * coeff).abs() < 1e-10 * lhs);
            }
        }
    }

    #[test]
    fn spectral_identity_multiplier_roundtrips() {
        let plan = SpectralPlan::new(&[8], 8, 1, 1, false).unwrap();
        let x = gauss_sample(&mut RngState::new(3), 8);
        let mut w = vec![0.0; plan.weight_len()];
        w[..8].iter_mut().for_each(|v| *v = 1.0);
        let (y, _) = plan.forward(&x, &w, 1);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_backward_is_adjoint() {
        for complex_io in [false, true] {
            for (grid, modes) in [(vec![8], 8usize), (vec![16], 6), (vec![8, 8], 4)] {
                let plan = SpectralPlan::new(&grid, modes, 2, 3, complex_io).unwrap();
                let mut r = RngState::new(7);
                let batch = 2;
                let x = gauss_sample(&mut r, plan.input_len(batch));
                let w = gauss_sample(&mut r, plan.weight_len());
                let (y, xs) = plan.forward(&x, &w, batch);
                let gy = gauss_sample(&mut r, y.len());
                let (gx, gw) = plan.backward(&gy, &xs, &w, batch);
                let dx = gauss_sample(&mut r, x.len());
                let dw = gauss_sample(&mut r, w.len());
                // the map is bilinear in (x, w)
                let (y1, _) = plan.forward(&dx, &w, batch);
                let (y2, _) = plan.forward(&x, &dw, batch);
                let lhs: f64 = gy.iter().zip(y1.iter().zip(&y2)).map(|(g, (a, b))| g * (a + b)).sum();
                let rhs: f64 = gx.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>()
                    + gw.iter().zip(&dw).map(|(a, b)| a * b).sum::<f64>();
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "{complex_io} {grid:?}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 32;
        let s = 2.0 * PI;
        let x: Vec<f64> = (0..n).map(|i| (3.0 * i as f64 / n as f64 * s).sin()).collect();
        let d1 = SpectralDiff::new(&[n], &[s], 0, 1).unwrap().apply(&x, false);
        let d2 = SpectralDiff::new(&[n], &[s], 0, 2).unwrap().apply(&x, false);
        for i in 0..n {
            let t = i as f64 / n as f64 * s;
            assert!((d1[i] - 3.0 * (3.0 * t).cos()).abs() < 1e-11);
            assert!((d2[i] + 9.0 * (3.0 * t).sin()).abs() < 1e-10);
        }
    }
}
