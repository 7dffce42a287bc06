//! Periodic, full-stride and transposed full-stride convolutions.
//!
//! All three are expressed through a stencil table: for each of `rows`
//! positions and each of `k` kernel taps it stores a flat grid index.
//! Periodic and strided convolutions gather from the input through the table,
//! the transposed convolution scatters into the output through it.

use crate::error::{invalid, shape, Result};
use crate::grid::{mod_index, multi_index, strides};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct StencilTable {
    /// Number of grid points on the side that is indexed through the table.
    pub grid_len: usize,
    /// Number of table rows.
    pub rows: usize,
    /// Kernel taps per row.
    pub k: usize,
    pub idx: Vec<usize>,
}

/// Table for periodic convolution: row `i`, tap `j` (kernel offset `j - w`)
/// points at `mod(i + j - w)`.
pub fn pconv_table(ext: &[usize], half: &[usize]) -> Result<StencilTable> {
    if ext.len() != half.len() {
        return shape(format!("kernel has {} axes, grid has {}", half.len(), ext.len()));
    }
    for (a, w) in ext.iter().zip(half) {
        if *a < 2 * w + 1 {
            return invalid(format!("kernel too large: extent {a} < 2*{w}+1"));
        }
    }
    let kext: Vec<usize> = half.iter().map(|w| 2 * w + 1).collect();
    let p: usize = ext.iter().product();
    let k: usize = kext.iter().product();
    let gs = strides(ext);
    let mut idx = Vec::with_capacity(p * k);
    for i in 0..p {
        let ii = multi_index(i, ext);
        for q in 0..k {
            let jj = multi_index(q, &kext);
            let mut flat = 0;
            for ax in 0..ext.len() {
                let pos = ii[ax] as i64 + jj[ax] as i64 - half[ax] as i64;
                flat += mod_index(pos, ext[ax]) * gs[ax];
            }
            idx.push(flat);
        }
    }
    Ok(StencilTable { grid_len: p, rows: p, k, idx })
}

/// Table for full-stride blocks: row `i` of the coarse grid `ext/w`, tap `j`
/// points at fine index `i*w + j`.
pub fn block_table(fine: &[usize], w: &[usize]) -> Result<StencilTable> {
    if fine.len() != w.len() {
        return shape(format!("kernel has {} axes, grid has {}", w.len(), fine.len()));
    }
    for (a, wk) in fine.iter().zip(w) {
        if *wk == 0 || a % wk != 0 {
            return invalid(format!("extent {a} is not divisible by kernel width {wk}"));
        }
    }
    let coarse: Vec<usize> = fine.iter().zip(w).map(|(a, b)| a / b).collect();
    let p: usize = coarse.iter().product();
    let k: usize = w.iter().product();
    let fs = strides(fine);
    let mut idx = Vec::with_capacity(p * k);
    for i in 0..p {
        let ii = multi_index(i, &coarse);
        for q in 0..k {
            let jj = multi_index(q, w);
            let flat: usize = (0..fine.len()).map(|ax| (ii[ax] * w[ax] + jj[ax]) * fs[ax]).sum();
            idx.push(flat);
        }
    }
    Ok(StencilTable { grid_len: fine.iter().product(), rows: p, k, idx })
}

/// `y[b,o,r] = Σ_c Σ_q x[b,c,T[r,q]] w[o,c,q]`; x has `grid_len` points per
/// channel, y has `rows`.
pub fn gather_forward(x: &[f64], w: &[f64], t: &StencilTable, batch: usize, cin: usize, cout: usize) -> Vec<f64> {
    let (g, r, k) = (t.grid_len, t.rows, t.k);
    let mut y = vec![0.0; batch * cout * r];
    for b in 0..batch {
        for o in 0..cout {
            let yb = &mut y[(b * cout + o) * r..(b * cout + o + 1) * r];
            for c in 0..cin {
                let xb = &x[(b * cin + c) * g..(b * cin + c + 1) * g];
                let wb = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (ri, yv) in yb.iter_mut().enumerate() {
                    let row = &t.idx[ri * k..(ri + 1) * k];
                    let mut acc = 0.0;
                    for q in 0..k {
                        acc += xb[row[q]] * wb[q];
                    }
                    *yv += acc;
                }
            }
        }
    }
    y
}

/// Adjoints of [`gather_forward`] with respect to `x` and `w`.
pub fn gather_backward(
    gy: &[f64],
    x: &[f64],
    w: &[f64],
    t: &StencilTable,
    batch: usize,
    cin: usize,
    cout: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (g, r, k) = (t.grid_len, t.rows, t.k);
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for b in 0..batch {
        for o in 0..cout {
            let gyb = &gy[(b * cout + o) * r..(b * cout + o + 1) * r];
            for c in 0..cin {
                let xb = &x[(b * cin + c) * g..(b * cin + c + 1) * g];
                let wb = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                let gxb = &mut gx[(b * cin + c) * g..(b * cin + c + 1) * g];
                let gwb = &mut gw[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (ri, &gv) in gyb.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let row = &t.idx[ri * k..(ri + 1) * k];
                    for q in 0..k {
                        gxb[row[q]] += gv * wb[q];
                        gwb[q] += gv * xb[row[q]];
                    }
                }
            }
        }
    }
    (gx, gw)
}

/// `y[b,o,T[r,q]] += Σ_c x[b,c,r] w[o,c,q]`; x has `rows` points per channel,
/// y has `grid_len`.
pub fn scatter_forward(x: &[f64], w: &[f64], t: &StencilTable, batch: usize, cin: usize, cout: usize) -> Vec<f64> {
    let (g, r, k) = (t.grid_len, t.rows, t.k);
    let mut y = vec![0.0; batch * cout * g];
    for b in 0..batch {
        for o in 0..cout {
            let yb = &mut y[(b * cout + o) * g..(b * cout + o + 1) * g];
            for c in 0..cin {
                let xb = &x[(b * cin + c) * r..(b * cin + c + 1) * r];
                let wb = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (ri, &xv) in xb.iter().enumerate() {
                    let row = &t.idx[ri * k..(ri + 1) * k];
                    for q in 0..k {
                        yb[row[q]] += xv * wb[q];
                    }
                }
            }
        }
    }
    y
}

/// Adjoints of [`scatter_forward`] with respect to `x` and `w`.
pub fn scatter_backward(
    gy: &[f64],
    x: &[f64],
    w: &[f64],
    t: &StencilTable,
    batch: usize,
    cin: usize,
    cout: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (g, r, k) = (t.grid_len, t.rows, t.k);
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for b in 0..batch {
        for o in 0..cout {
            let gyb = &gy[(b * cout + o) * g..(b * cout + o + 1) * g];
            for c in 0..cin {
                let xb = &x[(b * cin + c) * r..(b * cin + c + 1) * r];
                let wb = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                let gxb = &mut gx[(b * cin + c) * r..(b * cin + c + 1) * r];
                let gwb = &mut gw[(o * cin + c) * k..(o * cin + c + 1) * k];
                for ri in 0..r {
                    let row = &t.idx[ri * k..(ri + 1) * k];
                    let xv = xb[ri];
                    let mut acc = 0.0;
                    for q in 0..k {
                        let gv = gyb[row[q]];
                        acc += gv * wb[q];
                        gwb[q] += gv * xv;
                    }
                    gxb[ri] += acc;
                }
            }
        }
    }
    (gx, gw)
}

fn half_widths(w: &Tensor) -> Result<Vec<usize>> {
    w.shape()
        .iter()
        .map(|&e| {
            if e % 2 == 1 {
                Ok(e / 2)
            } else {
                invalid(format!("periodic kernel extents must be odd, got {e}"))
            }
        })
        .collect()
}

/// Periodic convolution `(A ⊛ W)_i = Σ_j A_{mod(i+j)} W_j`, `j ∈ {-w..w}^d`.
/// The kernel tensor stores offset `j` at index `j + w`.
pub fn pconv(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    if a.shape().len() != w.shape().len() {
        return shape(format!("kernel rank {} differs from input rank {}", w.shape().len(), a.shape().len()));
    }
    let t = pconv_table(a.shape(), &half_widths(w)?)?;
    Ok(Tensor::raw(a.shape().to_vec(), gather_forward(a.data(), w.data(), &t, 1, 1, 1)))
}

/// Full-stride convolution `(A ⊻ W)_i = Σ_j A_{i·w+j} W_j`.
pub fn sconv(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    if a.shape().len() != w.shape().len() {
        return shape(format!("kernel rank {} differs from input rank {}", w.shape().len(), a.shape().len()));
    }
    let t = block_table(a.shape(), w.shape())?;
    let out: Vec<usize> = a.shape().iter().zip(w.shape()).map(|(x, y)| x / y).collect();
    Ok(Tensor::raw(out, gather_forward(a.data(), w.data(), &t, 1, 1, 1)))
}

/// Full-stride transposed convolution `(B ⊼ W)_{i·w+j} = B_i W_j`.
pub fn tconv(b: &Tensor, w: &Tensor) -> Result<Tensor> {
    if b.shape().len() != w.shape().len() {
        return shape(format!("kernel rank {} differs from input rank {}", w.shape().len(), b.shape().len()));
    }
    let fine: Vec<usize> = b.shape().iter().zip(w.shape()).map(|(x, y)| x * y).collect();
    let t = block_table(&fine, w.shape())?;
    Ok(Tensor::raw(fine, scatter_forward(b.data(), w.data(), &t, 1, 1, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gauss_sample, RngState};
    use proptest::prelude::*;

    fn t1(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    fn naive_pconv(a: &Tensor, w: &Tensor) -> Vec<f64> {
        let ext = a.shape();
        let kext = w.shape();
        let d = ext.len();
        let p: usize = ext.iter().product();
        let k: usize = kext.iter().product();
        let mut out = vec![0.0; p];
        for (i, o) in out.iter_mut().enumerate() {
            let ii = multi_index(i, ext);
            for q in 0..k {
                let jj = multi_index(q, kext);
                let mut src = vec![0usize; d];
                for ax in 0..d {
                    let off = jj[ax] as i64 - (kext[ax] / 2) as i64;
                    src[ax] = (ii[ax] as i64 + off).rem_euclid(ext[ax] as i64) as usize;
                }
                let flat = src.iter().zip(strides(ext)).map(|(s, st)| s * st).sum::<usize>();
                *o += a.data()[flat] * w.data()[q];
            }
        }
        out
    }

    #[test]
    fn pconv_examples() {
        let a = t1(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pconv(&a, &t1(&[0.0, 0.0, 1.0])).unwrap().data(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(pconv(&a, &t1(&[1.0, 1.0, 1.0])).unwrap().data(), &[7.0, 6.0, 9.0, 8.0]);
        assert_eq!(pconv(&a, &t1(&[0.0, 1.0, 0.0])).unwrap().data(), a.data());
        assert!(pconv(&t1(&[1.0, 2.0]), &t1(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn stride_examples() {
        let a = t1(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(sconv(&a, &t1(&[1.0, 0.0])).unwrap().data(), &[1.0, 3.0]);
        assert_eq!(sconv(&a, &t1(&[1.0, 1.0])).unwrap().data(), &[3.0, 7.0]);
        assert_eq!(sconv(&a, &t1(&[1.0])).unwrap().data(), a.data());
        assert!(sconv(&a, &t1(&[1.0, 1.0, 1.0])).is_err());
        let b = t1(&[1.0, 2.0]);
        assert_eq!(tconv(&b, &t1(&[1.0, 0.0])).unwrap().data(), &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(tconv(&b, &t1(&[1.0])).unwrap().data(), b.data());
    }

    #[test]
    fn pconv_matches_naive_2d() {
        let mut r = RngState::new(11);
        let a = Tensor::new(vec![5, 6], gauss_sample(&mut r, 30)).unwrap();
        let w = Tensor::new(vec![3, 5], gauss_sample(&mut r, 15)).unwrap();
        let got = pconv(&a, &w).unwrap();
        for (x, y) in got.data().iter().zip(naive_pconv(&a, &w)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn multichannel_backward_matches_directional_derivative() {
        let mut r = RngState::new(2);
        let t = pconv_table(&[6], &[1]).unwrap();
        let (b, cin, cout) = (2, 3, 2);
        let x = gauss_sample(&mut r, b * cin * 6);
        let w = gauss_sample(&mut r, cout * cin * 3);
        let gy = gauss_sample(&mut r, b * cout * 6);
        let (gx, gw) = gather_backward(&gy, &x, &w, &t, b, cin, cout);
        let dx = gauss_sample(&mut r, x.len());
        let dw = gauss_sample(&mut r, w.len());
        let y1 = gather_forward(&dx, &w, &t, b, cin, cout);
        let y2 = gather_forward(&x, &dw, &t, b, cin, cout);
        let lhs: f64 = gy.iter().zip(y1.iter().zip(&y2)).map(|(g, (a, c))| g * (a + c)).sum();
        let rhs: f64 = gx.iter().zip(&dx).map(|(a, c)| a * c).sum::<f64>()
            + gw.iter().zip(&dw).map(|(a, c)| a * c).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10);

        let tb = block_table(&[8], &[2]).unwrap();
        let xs = gauss_sample(&mut r, b * cin * 4);
        let ws = gauss_sample(&mut r, cout * cin * 2);
        let gys = gauss_sample(&mut r, b * cout * 8);
        let (gx, gw) = scatter_backward(&gys, &xs, &ws, &tb, b, cin, cout);
        let dx = gauss_sample(&mut r, xs.len());
        let dw = gauss_sample(&mut r, ws.len());
        let y1 = scatter_forward(&dx, &ws, &tb, b, cin, cout);
        let y2 = scatter_forward(&xs, &dw, &tb, b, cin, cout);
        let lhs: f64 = gys.iter().zip(y1.iter().zip(&y2)).map(|(g, (a, c))| g * (a + c)).sum();
        let rhs: f64 = gx.iter().zip(&dx).map(|(a, c)| a * c).sum::<f64>()
            + gw.iter().zip(&dw).map(|(a, c)| a * c).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn pconv_shift_equivariant(n in 3usize..9, shift in 0usize..8, seed in 0u64..1000) {
            let mut r = RngState::new(seed);
            let a = gauss_sample(&mut r, n);
            let w = gauss_sample(&mut r, 3);
            let s = shift % n;
            let shifted: Vec<f64> = (0..n).map(|i| a[(i + s) % n]).collect();
            let c1 = pconv(&t1(&shifted), &t1(&w)).unwrap();
            let c0 = pconv(&t1(&a), &t1(&w)).unwrap();
            for i in 0..n {
                prop_assert!((c1.data()[i] - c0.data()[(i + s) % n]).abs() <= 1e-12);
            }
        }

        #[test]
        fn pconv_bilinear(n in 3usize..9, seed in 0u64..1000, alpha in -2.0f64..2.0) {
            let mut r = RngState::new(seed);
            let a = t1(&gauss_sample(&mut r, n));
            let b = t1(&gauss_sample(&mut r, n));
            let w = t1(&gauss_sample(&mut r, 3));
            let ab = t1(&a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + y).collect::<Vec<_>>());
            let lhs = pconv(&ab, &w).unwrap();
            let ca = pconv(&a, &w).unwrap();
            let cb = pconv(&b, &w).unwrap();
            for i in 0..n {
                prop_assert!((lhs.data()[i] - (alpha * ca.data()[i] + cb.data()[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn sconv_tconv_adjoint(nb in 1usize..5, w in 1usize..3, seed in 0u64..1000) {
            let mut r = RngState::new(seed);
            let n = nb * w;
            let a = t1(&gauss_sample(&mut r, n));
            let b = t1(&gauss_sample(&mut r, nb));
            let k = t1(&gauss_sample(&mut r, w));
            let lhs: f64 = tconv(&b, &k).unwrap().data().iter().zip(a.data()).map(|(x, y)| x * y).sum();
            let rhs: f64 = sconv(&a, &k).unwrap().data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
