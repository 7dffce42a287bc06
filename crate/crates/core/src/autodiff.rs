//! Reverse-mode differentiation tape over dense tensors.
//!
//! Nodes are appended in evaluation order, so every parent index is smaller
//! than its child's. Second-order input derivatives are obtained by pushing
//! Taylor coefficients through the same tape (see [`crate::jet`]); their
//! parameter gradients then come out of one ordinary reverse sweep.

use crate::activation::{Activation, MAX_ORDER};
use crate::conv::{gather_backward, gather_forward, scatter_backward, scatter_forward, StencilTable};
use crate::error::{invalid, shape, Error, Result};
use crate::fourier::{SpectralDiff, SpectralPlan, C64};
use crate::rng::{gauss_sample, RngState};
use crate::tensor::Tensor;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

/// Sparse linear map `y[dst] += coef · x[src]`.
#[derive(Clone, Debug)]
pub struct SparseMap {
    pub out_shape: Vec<usize>,
    pub in_len: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Act { x: usize, act: Activation, order: usize },
    Sum(usize),
    RowSum(usize),
    MatMulNT(usize, usize),
    AddRowBias(usize, usize),
    Slice { src: usize, offset: usize },
    Reshape(usize),
    ConcatCols(Vec<usize>),
    Cols { x: usize, start: usize },
    ChannelMix(usize, usize),
    AddChannelBias(usize, usize),
    GatherConv { x: usize, w: usize, table: Rc<StencilTable>, batch: usize, cin: usize, cout: usize },
    ScatterConv { x: usize, w: usize, table: Rc<StencilTable>, batch: usize, cin: usize, cout: usize },
    Spectral { x: usize, w: usize, plan: Rc<SpectralPlan>, batch: usize, spectrum: Vec<C64> },
    SpecDiff { x: usize, op: Rc<SpectralDiff> },
    Sparse { x: usize, map: Rc<SparseMap> },
    GatherRows { x: usize, idx: Rc<Vec<usize>> },
    BatchedMatVec(usize, usize),
    SegmentSum { x: usize, seg: usize },
    Transpose { x: usize, b: usize, a: usize, c: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Adjoints produced by a reverse sweep.
pub struct Grads {
    tape: u64,
    adj: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Grads {
    /// Adjoint of `v`; zeros when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Result<Vec<f64>> {
        if v.tape != self.tape || v.idx >= self.lens.len() {
            return Err(Error::Detached(format!("node {} is not on the differentiated tape", v.idx)));
        }
        Ok(match self.adj.get(v.idx).and_then(|a| a.as_ref()) {
            Some(a) => a.clone(),
            None => vec![0.0; self.lens[v.idx]],
        })
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], p: usize, len: usize) -> &'a mut Vec<f64> {
    adj[p].get_or_insert_with(|| vec![0.0; len])
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    let s = t.shape();
    match s.len() {
        1 => (1, s[0]),
        _ => (s[0], s[1..].iter().product()),
    }
}

/// `[batch, channels, points]` view of a tensor with at least 2 axes.
fn bcp(t: &Tensor) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() < 2 {
        return shape(format!("expected [batch, channels, grid…], got {s:?}"));
    }
    Ok((s[0], s[1], s[2..].iter().product::<usize>().max(1)))
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Detached(format!("node {} belongs to another tape", v.idx)));
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.check(v).expect("variable from another tape")].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    fn same_shape(&self, a: usize, b: usize, what: &str) -> Result<()> {
        if self.val(a).shape() != self.val(b).shape() {
            return shape(format!("{what}: {:?} vs {:?}", self.val(a).shape(), self.val(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(ia, ib, "add")?;
        let d = self.val(ia).data().iter().zip(self.val(ib).data()).map(|(x, y)| x + y).collect();
        let s = self.val(ia).shape().to_vec();
        Ok(self.push(Tensor::raw(s, d), Op::Add(ia, ib)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(ia, ib, "sub")?;
        let d = self.val(ia).data().iter().zip(self.val(ib).data()).map(|(x, y)| x - y).collect();
        let s = self.val(ia).shape().to_vec();
        Ok(self.push(Tensor::raw(s, d), Op::Sub(ia, ib)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(ia, ib, "mul")?;
        let d = self.val(ia).data().iter().zip(self.val(ib).data()).map(|(x, y)| x * y).collect();
        let s = self.val(ia).shape().to_vec();
        Ok(self.push(Tensor::raw(s, d), Op::Mul(ia, ib)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let t = self.val(ia).map(|x| c * x);
        Ok(self.push(t, Op::Scale(ia, c)))
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let t = self.val(ia).map(|x| x + c);
        Ok(self.push(t, Op::Offset(ia)))
    }

    /// Elementwise `act^{(order)}(x)`; `order ≤ MAX_ORDER − 1` so that the
    /// reverse sweep has the next derivative available.
    pub fn act(&mut self, x: Var, act: Activation, order: usize) -> Result<Var> {
        let ix = self.check(x)?;
        if order >= MAX_ORDER {
            return invalid(format!("activation derivative order {order} is not differentiable further"));
        }
        let t = self.val(ix).map(|v| act.derivative(order, v));
        Ok(self.push(t, Op::Act { x: ix, act, order }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let s = self.val(ix).data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(ix)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// `[R, n] → [R, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let (r, n) = rows_cols(self.val(ix));
        let d = self.val(ix).data().chunks(n).map(|c| c.iter().sum()).collect();
        Ok(self.push(Tensor::raw(vec![r, 1], d), Op::RowSum(ix)))
    }

    /// `x [R, n] · wᵀ` with `w [m, n]` → `[R, m]`.
    pub fn matmul_nt(&mut self, x: Var, w: Var) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let (r, n) = rows_cols(self.val(ix));
        let ws = self.val(iw).shape();
        if ws.len() != 2 || ws[1] != n {
            return shape(format!("matmul: x has {n} columns, w has shape {ws:?}"));
        }
        let m = ws[0];
        let xd = self.val(ix).data();
        let wd = self.val(iw).data();
        let mut y = vec![0.0; r * m];
        for row in 0..r {
            let xr = &xd[row * n..(row + 1) * n];
            let yr = &mut y[row * m..(row + 1) * m];
            for (i, yv) in yr.iter_mut().enumerate() {
                let wr = &wd[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for j in 0..n {
                    acc += xr[j] * wr[j];
                }
                *yv = acc;
            }
        }
        Ok(self.push(Tensor::raw(vec![r, m], y), Op::MatMulNT(ix, iw)))
    }

    /// `x [R, m] + b [m]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (ix, ib) = (self.check(x)?, self.check(b)?);
        let (r, m) = rows_cols(self.val(ix));
        if self.val(ib).len() != m {
            return shape(format!("bias of length {} for {m} columns", self.val(ib).len()));
        }
        let bd = self.val(ib).data();
        let mut y = self.val(ix).data().to_vec();
        for row in y.chunks_mut(m) {
            for (v, bv) in row.iter_mut().zip(bd) {
                *v += bv;
            }
        }
        Ok(self.push(Tensor::raw(vec![r, m], y), Op::AddRowBias(ix, ib)))
    }

    /// Contiguous sub-vector of `src` reshaped to `shape`.
    pub fn slice(&mut self, src: Var, offset: usize, out_shape: &[usize]) -> Result<Var> {
        let is = self.check(src)?;
        let n: usize = out_shape.iter().product();
        if offset + n > self.val(is).len() {
            return invalid(format!("slice {offset}..{} exceeds length {}", offset + n, self.val(is).len()));
        }
        let d = self.val(is).data()[offset..offset + n].to_vec();
        Ok(self.push(Tensor::raw(out_shape.to_vec(), d), Op::Slice { src: is, offset }))
    }

    pub fn reshape(&mut self, x: Var, out_shape: &[usize]) -> Result<Var> {
        let ix = self.check(x)?;
        let t = self.val(ix).clone().reshape(out_shape)?;
        Ok(self.push(t, Op::Reshape(ix)))
    }

    /// Column concatenation of `[R, k_i]` blocks.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = xs.iter().map(|&v| self.check(v)).collect::<Result<_>>()?;
        if idx.is_empty() {
            return invalid("concat of nothing");
        }
        let r = rows_cols(self.val(idx[0])).0;
        let mut widths = Vec::new();
        for &i in &idx {
            let (ri, ki) = rows_cols(self.val(i));
            if ri != r {
                return shape(format!("concat: {ri} rows vs {r}"));
            }
            widths.push(ki);
        }
        let total: usize = widths.iter().sum();
        let mut y = vec![0.0; r * total];
        let mut off = 0;
        for (&i, &k) in idx.iter().zip(&widths) {
            let d = self.val(i).data();
            for row in 0..r {
                y[row * total + off..row * total + off + k].copy_from_slice(&d[row * k..(row + 1) * k]);
            }
            off += k;
        }
        Ok(self.push(Tensor::raw(vec![r, total], y), Op::ConcatCols(idx)))
    }

    /// Columns `start..start+len` of `[R, n]`.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let (r, n) = rows_cols(self.val(ix));
        if start + len > n || len == 0 {
            return shape(format!("columns {start}..{} of {n}", start + len));
        }
        let d = self.val(ix).data();
        let mut y = Vec::with_capacity(r * len);
        for row in 0..r {
            y.extend_from_slice(&d[row * n + start..row * n + start + len]);
        }
        Ok(self.push(Tensor::raw(vec![r, len], y), Op::Cols { x: ix, start }))
    }

    /// Pointwise channel map `y[b,o,p] = Σ_c w[o,c] x[b,c,p]`.
    pub fn channel_mix(&mut self, x: Var, w: Var) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let (b, cin, p) = bcp(self.val(ix))?;
        let ws = self.val(iw).shape();
        if ws.len() != 2 || ws[1] != cin {
            return shape(format!("channel mix: {cin} input channels, weight {ws:?}"));
        }
        let cout = ws[0];
        let xd = self.val(ix).data();
        let wd = self.val(iw).data();
        let mut y = vec![0.0; b * cout * p];
        for bi in 0..b {
            for o in 0..cout {
                let yo = &mut y[(bi * cout + o) * p..(bi * cout + o + 1) * p];
                for c in 0..cin {
                    let wv = wd[o * cin + c];
                    if wv == 0.0 {
                        continue;
                    }
                    let xc = &xd[(bi * cin + c) * p..(bi * cin + c + 1) * p];
                    for (yv, xv) in yo.iter_mut().zip(xc) {
                        *yv += wv * xv;
                    }
                }
            }
        }
        let mut s = self.val(ix).shape().to_vec();
        s[1] = cout;
        Ok(self.push(Tensor::raw(s, y), Op::ChannelMix(ix, iw)))
    }

    /// `x[b,c,·] + bias[c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.check(x)?, self.check(bias)?);
        let (_, c, p) = bcp(self.val(ix))?;
        if self.val(ib).len() != c {
            return shape(format!("channel bias of length {} for {c} channels", self.val(ib).len()));
        }
        let bd = self.val(ib).data().to_vec();
        let mut y = self.val(ix).data().to_vec();
        for (j, chunk) in y.chunks_mut(p).enumerate() {
            let bv = bd[j % c];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
        let s = self.val(ix).shape().to_vec();
        Ok(self.push(Tensor::raw(s, y), Op::AddChannelBias(ix, ib)))
    }

    fn conv_dims(&self, ix: usize, iw: usize, table_len: usize) -> Result<(usize, usize, usize)> {
        let (b, cin, p) = bcp(self.val(ix))?;
        if p != table_len {
            return shape(format!("convolution input has {p} grid points, stencil expects {table_len}"));
        }
        let ws = self.val(iw).shape();
        if ws.len() < 2 || ws[1] != cin {
            return shape(format!("kernel {ws:?} for {cin} input channels"));
        }
        Ok((b, cin, ws[0]))
    }

    /// Multi-channel gather convolution (periodic or full-stride).
    pub fn gather_conv(&mut self, x: Var, w: Var, table: Rc<StencilTable>, out_grid: &[usize]) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let (b, cin, cout) = self.conv_dims(ix, iw, table.grid_len)?;
        if self.val(iw).len() != cout * cin * table.k || out_grid.iter().product::<usize>() != table.rows {
            return shape("kernel size does not match the stencil");
        }
        let y = gather_forward(self.val(ix).data(), self.val(iw).data(), &table, b, cin, cout);
        let mut s = vec![b, cout];
        s.extend_from_slice(out_grid);
        Ok(self.push(Tensor::raw(s, y), Op::GatherConv { x: ix, w: iw, table, batch: b, cin, cout }))
    }

    /// Multi-channel transposed full-stride convolution.
    pub fn scatter_conv(&mut self, x: Var, w: Var, table: Rc<StencilTable>, out_grid: &[usize]) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let (b, cin, cout) = self.conv_dims(ix, iw, table.rows)?;
        if self.val(iw).len() != cout * cin * table.k || out_grid.iter().product::<usize>() != table.grid_len {
            return shape("kernel size does not match the stencil");
        }
        let y = scatter_forward(self.val(ix).data(), self.val(iw).data(), &table, b, cin, cout);
        let mut s = vec![b, cout];
        s.extend_from_slice(out_grid);
        Ok(self.push(Tensor::raw(s, y), Op::ScatterConv { x: ix, w: iw, table, batch: b, cin, cout }))
    }

    /// Spectral convolution; `w` is `[2, cout, cin, n_modes]`.
    pub fn spectral(&mut self, x: Var, w: Var, plan: Rc<SpectralPlan>) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let b = self.val(ix).shape()[0];
        if self.val(ix).len() != plan.input_len(b) {
            return shape(format!("spectral input {:?} does not match plan", self.val(ix).shape()));
        }
        if self.val(iw).len() != plan.weight_len() {
            return shape(format!("spectral weights of length {}, plan needs {}", self.val(iw).len(), plan.weight_len()));
        }
        let (y, spectrum) = plan.forward(self.val(ix).data(), self.val(iw).data(), b);
        let co = if plan.complex_io { 2 * plan.cout } else { plan.cout };
        let mut s = vec![b, co];
        s.extend_from_slice(&plan.grid);
        Ok(self.push(Tensor::raw(s, y), Op::Spectral { x: ix, w: iw, plan, batch: b, spectrum }))
    }

    /// Spectral derivative applied to every `[grid…]` block of `x`.
    pub fn spec_diff(&mut self, x: Var, op: Rc<SpectralDiff>) -> Result<Var> {
        let ix = self.check(x)?;
        let p = op.multiplier.len();
        if self.val(ix).len() % p != 0 {
            return shape("spectral derivative: length is not a multiple of the grid size");
        }
        let y = op.apply(self.val(ix).data(), false);
        let s = self.val(ix).shape().to_vec();
        Ok(self.push(Tensor::raw(s, y), Op::SpecDiff { x: ix, op }))
    }

    pub fn sparse_linear(&mut self, x: Var, map: Rc<SparseMap>) -> Result<Var> {
        let ix = self.check(x)?;
        if self.val(ix).len() != map.in_len {
            return shape(format!("sparse map expects {} inputs, got {}", map.in_len, self.val(ix).len()));
        }
        let n: usize = map.out_shape.iter().product();
        let mut y = vec![0.0; n];
        let xd = self.val(ix).data();
        for &(dst, src, c) in &map.entries {
            y[dst] += c * xd[src];
        }
        Ok(self.push(Tensor::raw(map.out_shape.clone(), y), Op::Sparse { x: ix, map }))
    }

    /// Rows `idx` of `[R, n]`.
    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let ix = self.check(x)?;
        let (r, n) = rows_cols(self.val(ix));
        if idx.iter().any(|&i| i >= r) {
            return shape("row index out of range");
        }
        let d = self.val(ix).data();
        let mut y = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            y.extend_from_slice(&d[i * n..(i + 1) * n]);
        }
        Ok(self.push(Tensor::raw(vec![idx.len(), n], y), Op::GatherRows { x: ix, idx }))
    }

    /// Row-wise `y[r] = K[r] v[r]` with `K[r]` an `n×n` matrix stored in row `r` of `k`.
    pub fn batched_matvec(&mut self, k: Var, v: Var) -> Result<Var> {
        let (ik, iv) = (self.check(k)?, self.check(v)?);
        let (r, n) = rows_cols(self.val(iv));
        let (rk, nk) = rows_cols(self.val(ik));
        if rk != r || nk != n * n {
            return shape(format!("batched matvec: K {:?}, v {:?}", self.val(ik).shape(), self.val(iv).shape()));
        }
        let kd = self.val(ik).data();
        let vd = self.val(iv).data();
        let mut y = vec![0.0; r * n];
        for row in 0..r {
            let kr = &kd[row * n * n..(row + 1) * n * n];
            let vr = &vd[row * n..(row + 1) * n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += kr[i * n + j] * vr[j];
                }
                y[row * n + i] = acc;
            }
        }
        Ok(self.push(Tensor::raw(vec![r, n], y), Op::BatchedMatVec(ik, iv)))
    }

    /// Sum consecutive groups of `seg` rows: `[R·seg, n] → [R, n]`.
    pub fn segment_sum(&mut self, x: Var, seg: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let (rs, n) = rows_cols(self.val(ix));
        if seg == 0 || rs % seg != 0 {
            return shape(format!("{rs} rows cannot be split into segments of {seg}"));
        }
        let r = rs / seg;
        let d = self.val(ix).data();
        let mut y = vec![0.0; r * n];
        for row in 0..rs {
            let dst = &mut y[(row / seg) * n..(row / seg + 1) * n];
            for (a, b) in dst.iter_mut().zip(&d[row * n..(row + 1) * n]) {
                *a += b;
            }
        }
        Ok(self.push(Tensor::raw(vec![r, n], y), Op::SegmentSum { x: ix, seg }))
    }

    /// Batched transpose `[b, a, c] → [b, c, a]`.
    pub fn transpose(&mut self, x: Var, b: usize, a: usize, c: usize) -> Result<Var> {
        let ix = self.check(x)?;
        if self.val(ix).len() != b * a * c {
            return shape(format!("transpose of {:?} as [{b}, {a}, {c}]", self.val(ix).shape()));
        }
        let y = transpose_data(self.val(ix).data(), b, a, c);
        Ok(self.push(Tensor::raw(vec![b, c, a], y), Op::Transpose { x: ix, b, a, c }))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        let out = self.check(output)?;
        if self.val(out).len() != 1 {
            return shape(format!("gradient needs a scalar output, got shape {:?}", self.val(out).shape()));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; out + 1];
        adj[out] = Some(vec![1.0]);
        for i in (0..=out).rev() {
            let g = match &self.nodes[i].op {
                Op::Leaf => continue,
                _ => match adj[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(i, &g, &mut adj, &lens);
        }
        Ok(Grads { tape: self.id, adj, lens })
    }

    /// `∂output/∂wrt_i` for each `wrt_i`.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Vec<f64>>> {
        for &w in wrt {
            self.check(w)?;
        }
        let g = self.backward(output)?;
        wrt.iter().map(|&w| g.wrt(w)).collect()
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>], lens: &[usize]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                axpy(slot(adj, *a, lens[*a]), 1.0, g);
                axpy(slot(adj, *b, lens[*b]), 1.0, g);
            }
            Op::Sub(a, b) => {
                axpy(slot(adj, *a, lens[*a]), 1.0, g);
                axpy(slot(adj, *b, lens[*b]), -1.0, g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a).data(), self.val(*b).data());
                let ga = slot(adj, *a, lens[*a]);
                for k in 0..g.len() {
                    ga[k] += g[k] * vb[k];
                }
                let gb = slot(adj, *b, lens[*b]);
                for k in 0..g.len() {
                    gb[k] += g[k] * va[k];
                }
            }
            Op::Scale(a, c) => axpy(slot(adj, *a, lens[*a]), *c, g),
            Op::Offset(a) => axpy(slot(adj, *a, lens[*a]), 1.0, g),
            Op::Act { x, act, order } => {
                let xv = self.val(*x).data();
                let gx = slot(adj, *x, lens[*x]);
                for k in 0..g.len() {
                    gx[k] += g[k] * act.derivative(order + 1, xv[k]);
                }
            }
            Op::Sum(x) => {
                let gx = slot(adj, *x, lens[*x]);
                gx.iter_mut().for_each(|v| *v += g[0]);
            }
            Op::RowSum(x) => {
                let n = lens[*x] / g.len();
                let gx = slot(adj, *x, lens[*x]);
                for (row, chunk) in gx.chunks_mut(n).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += g[row]);
                }
            }
            Op::MatMulNT(x, w) => {
                let (r, n) = rows_cols(self.val(*x));
                let m = self.val(*w).shape()[0];
                let (xd, wd) = (self.val(*x).data(), self.val(*w).data());
                {
                    let gx = slot(adj, *x, lens[*x]);
                    for row in 0..r {
                        let gr = &g[row * m..(row + 1) * m];
                        let gxr = &mut gx[row * n..(row + 1) * n];
                        for (i, &gv) in gr.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            let wr = &wd[i * n..(i + 1) * n];
                            for j in 0..n {
                                gxr[j] += gv * wr[j];
                            }
                        }
                    }
                }
                let gw = slot(adj, *w, lens[*w]);
                for row in 0..r {
                    let gr = &g[row * m..(row + 1) * m];
                    let xr = &xd[row * n..(row + 1) * n];
                    for (i, &gv) in gr.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        let gwr = &mut gw[i * n..(i + 1) * n];
                        for j in 0..n {
                            gwr[j] += gv * xr[j];
                        }
                    }
                }
            }
            Op::AddRowBias(x, b) => {
                axpy(slot(adj, *x, lens[*x]), 1.0, g);
                let m = lens[*b];
                let gb = slot(adj, *b, m);
                for row in g.chunks(m) {
                    for (a, v) in gb.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            Op::Slice { src, offset } => {
                let gs = slot(adj, *src, lens[*src]);
                axpy(&mut gs[*offset..offset + g.len()], 1.0, g);
            }
            Op::Reshape(x) => axpy(slot(adj, *x, lens[*x]), 1.0, g),
            Op::ConcatCols(parts) => {
                let total: usize = parts.iter().map(|&p| rows_cols(self.val(p)).1).sum();
                let r = g.len() / total;
                let mut off = 0;
                for &p in parts {
                    let k = rows_cols(self.val(p)).1;
                    let gp = slot(adj, p, lens[p]);
                    for row in 0..r {
                        axpy(&mut gp[row * k..(row + 1) * k], 1.0, &g[row * total + off..row * total + off + k]);
                    }
                    off += k;
                }
            }
            Op::Cols { x, start } => {
                let (r, n) = rows_cols(self.val(*x));
                let len = g.len() / r;
                let gx = slot(adj, *x, lens[*x]);
                for row in 0..r {
                    axpy(&mut gx[row * n + start..row * n + start + len], 1.0, &g[row * len..(row + 1) * len]);
                }
            }
            Op::ChannelMix(x, w) => {
                let (b, cin, p) = bcp(self.val(*x)).expect("checked at construction");
                let cout = self.val(*w).shape()[0];
                let (xd, wd) = (self.val(*x).data(), self.val(*w).data());
                {
                    let gx = slot(adj, *x, lens[*x]);
                    for bi in 0..b {
                        for o in 0..cout {
                            let go = &g[(bi * cout + o) * p..(bi * cout + o + 1) * p];
                            for c in 0..cin {
                                let wv = wd[o * cin + c];
                                if wv == 0.0 {
                                    continue;
                                }
                                axpy(&mut gx[(bi * cin + c) * p..(bi * cin + c + 1) * p], wv, go);
                            }
                        }
                    }
                }
                let gw = slot(adj, *w, lens[*w]);
                for bi in 0..b {
                    for o in 0..cout {
                        let go = &g[(bi * cout + o) * p..(bi * cout + o + 1) * p];
                        for c in 0..cin {
                            let xc = &xd[(bi * cin + c) * p..(bi * cin + c + 1) * p];
                            gw[o * cin + c] += dot(go, xc);
                        }
                    }
                }
            }
            Op::AddChannelBias(x, bias) => {
                axpy(slot(adj, *x, lens[*x]), 1.0, g);
                let (_, c, p) = bcp(self.val(*x)).expect("checked at construction");
                let gb = slot(adj, *bias, c);
                for (j, chunk) in g.chunks(p).enumerate() {
                    gb[j % c] += chunk.iter().sum::<f64>();
                }
            }
            Op::GatherConv { x, w, table, batch, cin, cout } => {
                let (gx, gw) = gather_backward(g, self.val(*x).data(), self.val(*w).data(), table, *batch, *cin, *cout);
                axpy(slot(adj, *x, lens[*x]), 1.0, &gx);
                axpy(slot(adj, *w, lens[*w]), 1.0, &gw);
            }
            Op::ScatterConv { x, w, table, batch, cin, cout } => {
                let (gx, gw) = scatter_backward(g, self.val(*x).data(), self.val(*w).data(), table, *batch, *cin, *cout);
                axpy(slot(adj, *x, lens[*x]), 1.0, &gx);
                axpy(slot(adj, *w, lens[*w]), 1.0, &gw);
            }
            Op::Spectral { x, w, plan, batch, spectrum } => {
                let (gx, gw) = plan.backward(g, spectrum, self.val(*w).data(), *batch);
                axpy(slot(adj, *x, lens[*x]), 1.0, &gx);
                axpy(slot(adj, *w, lens[*w]), 1.0, &gw);
            }
            Op::SpecDiff { x, op } => {
                let gx = op.apply(g, true);
                axpy(slot(adj, *x, lens[*x]), 1.0, &gx);
            }
            Op::Sparse { x, map } => {
                let gx = slot(adj, *x, lens[*x]);
                for &(dst, src, c) in &map.entries {
                    gx[src] += c * g[dst];
                }
            }
            Op::GatherRows { x, idx } => {
                let n = rows_cols(self.val(*x)).1;
                let gx = slot(adj, *x, lens[*x]);
                for (row, &i) in idx.iter().enumerate() {
                    axpy(&mut gx[i * n..(i + 1) * n], 1.0, &g[row * n..(row + 1) * n]);
                }
            }
            Op::BatchedMatVec(k, v) => {
                let (r, n) = rows_cols(self.val(*v));
                let (kd, vd) = (self.val(*k).data(), self.val(*v).data());
                {
                    let gk = slot(adj, *k, lens[*k]);
                    for row in 0..r {
                        for i in 0..n {
                            let gv = g[row * n + i];
                            let dst = &mut gk[row * n * n + i * n..row * n * n + (i + 1) * n];
                            axpy(dst, gv, &vd[row * n..(row + 1) * n]);
                        }
                    }
                }
                let gvv = slot(adj, *v, lens[*v]);
                for row in 0..r {
                    for i in 0..n {
                        let gv = g[row * n + i];
                        let kr = &kd[row * n * n + i * n..row * n * n + (i + 1) * n];
                        axpy(&mut gvv[row * n..(row + 1) * n], gv, kr);
                    }
                }
            }
            Op::SegmentSum { x, seg } => {
                let n = rows_cols(self.val(*x)).1;
                let gx = slot(adj, *x, lens[*x]);
                for (row, chunk) in gx.chunks_mut(n).enumerate() {
                    axpy(chunk, 1.0, &g[(row / seg) * n..(row / seg + 1) * n]);
                }
            }
            Op::Transpose { x, b, a, c } => {
                let gt = transpose_data(g, *b, *c, *a);
                axpy(slot(adj, *x, lens[*x]), 1.0, &gt);
            }
        }
    }
}

/// Build a scalar loss of the parameter leaf `theta` on a fresh tape and
/// return its value and gradient.
pub fn value_and_grad<F>(theta: &[f64], build: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut t = Tape::new();
    let th = t.leaf(Tensor::from_vec(theta.to_vec()));
    let loss = build(&mut t, th)?;
    if t.value(loss).len() != 1 {
        return shape(format!("loss must be scalar, got shape {:?}", t.value(loss).shape()));
    }
    let v = t.scalar_value(loss);
    let g = t.grad(loss, &[th])?.remove(0);
    Ok((v, g))
}

/// Value only, with `theta` held constant.
pub fn value_of<F>(theta: &[f64], build: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut t = Tape::new();
    let th = t.constant(Tensor::from_vec(theta.to_vec()));
    let loss = build(&mut t, th)?;
    Ok(t.scalar_value(loss))
}

/// Largest relative error between `⟨grad, u⟩` and the central difference
/// `(f(θ+hu) − f(θ−hu))/2h` over `probes` random unit directions.
pub fn directional_gradient_check<F>(theta: &[f64], grad: &[f64], f: F, probes: usize, h: f64, rng: &mut RngState) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if grad.len() != theta.len() {
        return shape(format!("gradient of length {} for {} parameters", grad.len(), theta.len()));
    }
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut u = gauss_sample(rng, theta.len());
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let shifted = |s: f64| theta.iter().zip(&u).map(|(t, d)| t + s * d).collect::<Vec<f64>>();
        let fd = (f(&shifted(h))? - f(&shifted(-h))?) / (2.0 * h);
        let ad = dot(grad, &u);
        let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn transpose_data(x: &[f64], b: usize, a: usize, c: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for bi in 0..b {
        let src = &x[bi * a * c..(bi + 1) * a * c];
        let dst = &mut y[bi * a * c..(bi + 1) * a * c];
        for i in 0..a {
            for j in 0..c {
                dst[j * a + i] = src[i * c + j];
            }
        }
    }
    y
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gauss_sample, RngState};

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let th = t.leaf(Tensor::from_vec(vec![2.0, 3.0]));
        let a = t.slice(th, 0, &[1]).unwrap();
        let b = t.slice(th, 1, &[1]).unwrap();
        let p = t.mul(a, b).unwrap();
        assert_eq!(t.grad(p, &[th]).unwrap()[0], vec![3.0, 2.0]);
        let mut t = Tape::new();
        let th = t.leaf(Tensor::from_vec(vec![5.0]));
        assert_eq!(t.grad(th, &[th]).unwrap()[0], vec![1.0]);
    }

    #[test]
    fn tanh_matches_fd() {
        let f = |x: f64| {
            let mut t = Tape::new();
            let v = t.leaf(Tensor::scalar(x));
            let y = t.act(v, Activation::Tanh, 0).unwrap();
            (t.scalar_value(y), t.grad(y, &[v]).unwrap()[0][0])
        };
        let h = 1e-5;
        let fd = (f(0.5 + h).0 - f(0.5 - h).0) / (2.0 * h);
        assert!((f(0.5).1 - fd).abs() < 1e-7);
    }

    #[test]
    fn errors() {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(t.grad(v, &[v]).is_err());
        let mut other = Tape::new();
        let w = other.leaf(Tensor::scalar(1.0));
        assert!(matches!(t.sum(w), Err(Error::Detached(_))));
        let s = t.sum(v).unwrap();
        assert!(matches!(t.grad(s, &[w]), Err(Error::Detached(_))));
    }

    fn check_fd<F>(n: usize, seed: u64, f: F)
    where
        F: Fn(&mut Tape, Var) -> Var,
    {
        let mut r = RngState::new(seed);
        let x0 = gauss_sample(&mut r, n);
        let eval = |x: &[f64]| {
            let mut t = Tape::new();
            let v = t.leaf(Tensor::from_vec(x.to_vec()));
            let y = f(&mut t, v);
            t.scalar_value(y)
        };
        let mut t = Tape::new();
        let v = t.leaf(Tensor::from_vec(x0.clone()));
        let y = f(&mut t, v);
        let g = t.grad(y, &[v]).unwrap().remove(0);
        for _ in 0..5 {
            let u = gauss_sample(&mut r, n);
            let h = 1e-5;
            let xp: Vec<f64> = x0.iter().zip(&u).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x0.iter().zip(&u).map(|(a, b)| a - h * b).collect();
            let fd = (eval(&xp) - eval(&xm)) / (2.0 * h);
            let ad: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((fd - ad).abs() <= 1e-6 * (1.0 + ad.abs()), "{fd} vs {ad}");
        }
    }

    #[test]
    fn structural_ops_fd() {
        // x: 24 values used as [4, 6] data and parameters of several ops
        check_fd(24, 1, |t, x| {
            let a = t.slice(x, 0, &[4, 3]).unwrap();
            let w = t.slice(x, 12, &[2, 3]).unwrap();
            let b = t.slice(x, 18, &[2]).unwrap();
            let y = t.matmul_nt(a, w).unwrap();
            let y = t.add_row_bias(y, b).unwrap();
            let z = t.act(y, Activation::Gelu, 1).unwrap();
            let c = t.concat_cols(&[z, a]).unwrap();
            let c2 = t.cols(c, 1, 3).unwrap();
            let s = t.row_sum(c2).unwrap();
            let q = t.square(s).unwrap();
            let m = t.mean(q).unwrap();
            let o = t.offset(m, 2.0).unwrap();
            t.scale(o, 0.5).unwrap()
        });
        check_fd(30, 2, |t, x| {
            let k = t.slice(x, 0, &[3, 4]).unwrap();
            let v = t.slice(x, 12, &[3, 2]).unwrap();
            let y = t.batched_matvec(k, v).unwrap();
            let idx = Rc::new(vec![0, 2, 2, 1]);
            let gth = t.gather_rows(y, idx).unwrap();
            let s = t.segment_sum(gth, 2).unwrap();
            let s = t.transpose(s, 1, 2, 2).unwrap();
            let tt = t.act(s, Activation::Tanh, 2).unwrap();
            let sq = t.mul(tt, s).unwrap();
            t.sum(sq).unwrap()
        });
        check_fd(2 * 3 * 8 + 4 * 3 + 4, 3, |t, x| {
            let a = t.slice(x, 0, &[2, 3, 8]).unwrap();
            let w = t.slice(x, 48, &[4, 3]).unwrap();
            let b = t.slice(x, 60, &[4]).unwrap();
            let y = t.channel_mix(a, w).unwrap();
            let y = t.add_channel_bias(y, b).unwrap();
            let y = t.act(y, Activation::Tanh, 0).unwrap();
            let q = t.square(y).unwrap();
            t.sum(q).unwrap()
        });
    }

    #[test]
    fn linearity_of_reverse_sweep() {
        let mut r = RngState::new(5);
        let x0 = gauss_sample(&mut r, 6);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(x0));
        let f = t.act(x, Activation::Tanh, 0).unwrap();
        let f = t.sum(f).unwrap();
        let g = t.square(x).unwrap();
        let g = t.sum(g).unwrap();
        let af = t.scale(f, 1.7).unwrap();
        let bg = t.scale(g, -0.3).unwrap();
        let h = t.add(af, bg).unwrap();
        let gf = t.grad(f, &[x]).unwrap().remove(0);
        let gg = t.grad(g, &[x]).unwrap().remove(0);
        let gh = t.grad(h, &[x]).unwrap().remove(0);
        for k in 0..6 {
            let want = 1.7 * gf[k] - 0.3 * gg[k];
            assert!((gh[k] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}
