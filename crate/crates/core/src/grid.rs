//! Periodic grid primitives.

use crate::error::{invalid, shape, Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Row-major strides for `ext`.
pub fn strides(ext: &[usize]) -> Vec<usize> {
    let mut s = vec![1; ext.len()];
    for k in (0..ext.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * ext[k + 1];
    }
    s
}

/// Row-major multi-index of flat position `i`.
pub fn multi_index(mut i: usize, ext: &[usize]) -> Vec<usize> {
    let mut out = vec![0; ext.len()];
    for k in (0..ext.len()).rev() {
        out[k] = i % ext[k];
        i /= ext[k];
    }
    out
}

#[inline]
/// Row-major flat index of a multi-index.
pub fn flatten_index(ii: &[usize], ext: &[usize]) -> usize {
    ii.iter().zip(ext).fold(0, |acc, (&i, &a)| acc * a + i)
}

pub fn mod_index(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// `mod_a(b)`: the representative of `b` modulo `a` in `[0, a)`.
pub fn mod_op(a: usize, b: f64) -> f64 {
    assert!(a >= 1, "mod_op needs a >= 1");
    let a = a as f64;
    let r = b - a * (b / a).floor();
    if r >= a || r < 0.0 {
        0.0
    } else {
        r
    }
}

/// Row-major flattening.
pub fn flatten(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

pub fn unflatten(v: &[f64], extents: &[usize]) -> Result<Tensor> {
    let n: usize = extents.iter().product();
    if n != v.len() {
        return shape(format!("cannot unflatten {} values into {extents:?}", v.len()));
    }
    Tensor::new(extents.to_vec(), v.to_vec())
}

/// Periodic multilinear interpolation of grid values `x` (on `[0,1]^d`) at `y`.
pub fn interp_eval(x: &Tensor, y: &[f64]) -> Result<f64> {
    let ext = x.shape();
    let d = ext.len();
    if y.len() != d {
        return shape(format!("point has {} coordinates, grid has {d} axes", y.len()));
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid(format!("point {y:?} outside the unit cube"));
    }
    let st = strides(ext);
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let t = ext[k] as f64 * y[k];
        let i0 = (t.floor() as usize).min(ext[k] - 1);
        base[k] = i0;
        frac[k] = t - i0 as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0;
        for k in 0..d {
            let up = (corner >> k) & 1 == 1;
            w *= if up { frac[k] } else { 1.0 - frac[k] };
            let i = (base[k] + up as usize) % ext[k];
            flat += i * st[k];
        }
        if w != 0.0 {
            acc += w * x.data()[flat];
        }
    }
    Ok(acc)
}

/// Periodic scalar field on an equidistant left-closed grid over
/// `[0,S_1) × … × [0,S_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub lengths: Vec<f64>,
    pub values: Tensor,
}

impl GridFunction {
    pub fn new(lengths: Vec<f64>, values: Tensor) -> Result<Self> {
        if lengths.len() != values.shape().len() {
            return shape(format!("{} domain lengths for a {}-d grid", lengths.len(), values.shape().len()));
        }
        if lengths.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid("domain lengths must be positive");
        }
        if !values.all_finite() {
            return invalid("grid values must be finite");
        }
        Ok(GridFunction { lengths, values })
    }

    pub fn from_vec(lengths: Vec<f64>, extents: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        GridFunction::new(lengths, Tensor::new(extents, data)?)
    }

    pub fn zeros(lengths: &[f64], extents: &[usize]) -> Self {
        GridFunction { lengths: lengths.to_vec(), values: Tensor::zeros(extents) }
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn extents(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.values.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.values.data_mut()
    }

    /// `∏S_k / ∏𝔡_k`.
    pub fn cell_volume(&self) -> f64 {
        self.lengths.iter().product::<f64>() / self.len() as f64
    }

    /// Physical coordinates of flat grid index `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        multi_index(i, self.extents())
            .iter()
            .zip(self.extents().iter().zip(&self.lengths))
            .map(|(&j, (&n, &s))| j as f64 / n as f64 * s)
            .collect()
    }

    /// Evaluate the periodic interpolant at a physical point in the domain.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let unit: Vec<f64> = y.iter().zip(&self.lengths).map(|(v, s)| v / s).collect();
        interp_eval(&self.values, &unit)
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.extents() == other.extents() && self.lengths == other.lengths
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { lengths: self.lengths.clone(), values: self.values.map(f) }
    }

    /// Restriction to a coarser grid whose extents divide ours.
    pub fn restrict(&self, extents: &[usize]) -> Result<GridFunction> {
        if extents.len() != self.dims() {
            return shape("restriction changes the dimension");
        }
        let mut step = Vec::with_capacity(extents.len());
        for (f, c) in self.extents().iter().zip(extents) {
            if *c == 0 || f % c != 0 {
                return invalid(format!("cannot restrict extent {f} to {c}"));
            }
            step.push(f / c);
        }
        let fs = strides(self.extents());
        let n: usize = extents.iter().product();
        let data = (0..n)
            .map(|i| {
                let ii = multi_index(i, extents);
                let flat: usize = ii.iter().enumerate().map(|(k, &j)| j * step[k] * fs[k]).sum();
                self.data()[flat]
            })
            .collect();
        Ok(GridFunction { lengths: self.lengths.clone(), values: Tensor::raw(extents.to_vec(), data) })
    }
}

/// Sample `f` at the grid points `(i_1/𝔡_1·S_1, …)`.
pub fn grid_sample<F>(f: F, extents: &[usize], lengths: &[f64]) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if extents.len() != lengths.len() || extents.iter().any(|&e| e == 0) {
        return shape(format!("extents {extents:?} incompatible with lengths {lengths:?}"));
    }
    let mut g = GridFunction::zeros(lengths, extents);
    for i in 0..g.len() {
        let p = g.point(i);
        let v = f(&p)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite sample at {p:?}")));
        }
        g.data_mut()[i] = v;
    }
    Ok(g)
}

/// `sqrt((∏S_k/∏𝔡_k) Σ h²)`.
pub fn discrete_l2_seminorm(h: &GridFunction) -> f64 {
    (h.cell_volume() * h.data().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Squared seminorm of `a - b` on a shared grid.
pub fn seminorm_sq_diff(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    if !a.same_grid(b) {
        return shape(format!("grids differ: {:?} vs {:?}", a.extents(), b.extents()));
    }
    Ok(a.cell_volume() * a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// Monte Carlo L² distance between two operators over test inputs.
pub fn l2_error_mc<A, B>(a: A, b: B, inputs: &[GridFunction]) -> Result<f64>
where
    A: Fn(&GridFunction) -> Result<GridFunction>,
    B: Fn(&GridFunction) -> Result<GridFunction>,
{
    if inputs.is_empty() {
        return invalid("l2_error_mc needs a nonempty test set");
    }
    let mut acc = 0.0;
    for i in inputs {
        acc += seminorm_sq_diff(&a(i)?, &b(i)?)?;
    }
    Ok((acc / inputs.len() as f64).sqrt())
}
