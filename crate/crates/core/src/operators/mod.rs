//! Neural operators mapping grid samples on `[0,1]^d` to grid samples.
//!
//! Every architecture reads its parameters from one flat vector and exposes
//! a batched tape forward pass `inputs [B, P] → outputs [B, P]`, `P` the
//! number of grid points.

pub mod deeponet;
pub mod encdec;
pub mod fcnn;
pub mod fno;
pub mod ikno;
pub mod pcnn;

pub use deeponet::DeepOnetOperator;
pub use encdec::EncDecOperator;
pub use fcnn::FcnnOperator;
pub use fno::FnoOperator;
pub use ikno::IknoOperator;
pub use pcnn::PcnnOperator;

use crate::autodiff::{Tape, Var};
use crate::error::{shape, Result};
use crate::grid::{multi_index, GridFunction};
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Fcnn(FcnnOperator),
    Pcnn(PcnnOperator),
    EncDec(EncDecOperator),
    Fno(FnoOperator),
    DeepOnet(DeepOnetOperator),
    Ikno(IknoOperator),
}

macro_rules! dispatch {
    ($s:expr, $m:ident $(, $a:expr)*) => {
        match $s {
            OperatorSpec::Fcnn(o) => o.$m($($a),*),
            OperatorSpec::Pcnn(o) => o.$m($($a),*),
            OperatorSpec::EncDec(o) => o.$m($($a),*),
            OperatorSpec::Fno(o) => o.$m($($a),*),
            OperatorSpec::DeepOnet(o) => o.$m($($a),*),
            OperatorSpec::Ikno(o) => o.$m($($a),*),
        }
    };
}

impl OperatorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorSpec::Fcnn(_) => "fcnn",
            OperatorSpec::Pcnn(_) => "pcnn",
            OperatorSpec::EncDec(_) => "encdec",
            OperatorSpec::Fno(_) => "fno",
            OperatorSpec::DeepOnet(_) => "deeponet",
            OperatorSpec::Ikno(_) => "ikno",
        }
    }

    pub fn validate(&self) -> Result<()> {
        dispatch!(self, validate)
    }

    pub fn extents(&self) -> &[usize] {
        dispatch!(self, extents)
    }

    pub fn points(&self) -> usize {
        self.extents().iter().product()
    }

    pub fn param_count(&self) -> usize {
        dispatch!(self, param_count)
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        dispatch!(self, init, rng)
    }

    /// Batched forward pass; `inputs` holds `B` grid samples back to back.
    pub fn forward(&self, t: &mut Tape, theta: Var, inputs: &Tensor) -> Result<Var> {
        if t.value(theta).len() != self.param_count() {
            return shape(format!("{} needs {} parameters, got {}", self.kind(), self.param_count(), t.value(theta).len()));
        }
        let p = self.points();
        if inputs.is_empty() || inputs.len() % p != 0 {
            return shape(format!("inputs of length {} are not a batch of {p}-point grids", inputs.len()));
        }
        let batch = inputs.len() / p;
        let x = inputs.clone().reshape(&[batch, p])?;
        dispatch!(self, forward, t, theta, &x)
    }

    /// Grid outputs for a batch of inputs, as `[B, P]` data.
    pub fn apply_batch(&self, theta: &[f64], inputs: &Tensor) -> Result<Tensor> {
        let mut t = Tape::new();
        let th = t.constant(Tensor::new(vec![theta.len()], theta.to_vec())?);
        let y = self.forward(&mut t, th, inputs)?;
        Ok(t.value(y).clone())
    }

    pub fn apply(&self, theta: &[f64], f: &GridFunction) -> Result<GridFunction> {
        if f.extents() != self.extents() {
            return shape(format!("input grid {:?} differs from operator grid {:?}", f.extents(), self.extents()));
        }
        let y = self.apply_batch(theta, &f.values)?;
        GridFunction::from_vec(f.lengths.clone(), self.extents().to_vec(), y.into_data())
    }

    /// Copy of the spec evaluated on another grid, for the architectures whose
    /// parameters do not depend on the resolution.
    pub fn with_extents(&self, extents: &[usize]) -> Result<OperatorSpec> {
        let mut s = self.clone();
        match &mut s {
            OperatorSpec::Fno(o) => o.extents = extents.to_vec(),
            OperatorSpec::Pcnn(o) => o.extents = extents.to_vec(),
            OperatorSpec::Ikno(o) => o.extents = extents.to_vec(),
            _ => return shape(format!("{} is tied to its grid", self.kind())),
        }
        s.validate()?;
        Ok(s)
    }
}

/// Normalized grid coordinates `i/a` as rows `[P, d]`.
pub fn grid_coords(extents: &[usize]) -> Vec<f64> {
    let p: usize = extents.iter().product();
    let d = extents.len();
    let mut out = Vec::with_capacity(p * d);
    for i in 0..p {
        let ii = multi_index(i, extents);
        for ax in 0..d {
            out.push(ii[ax] as f64 / extents[ax] as f64);
        }
    }
    out
}

/// Per-point features `(x, f(x))` as rows `[B·P, d+1]`.
pub(crate) fn point_features(extents: &[usize], inputs: &Tensor) -> Tensor {
    let coords = grid_coords(extents);
    let d = extents.len();
    let p: usize = extents.iter().product();
    let b = inputs.len() / p;
    let mut out = Vec::with_capacity(b * p * (d + 1));
    for bi in 0..b {
        for i in 0..p {
            out.extend_from_slice(&coords[i * d..(i + 1) * d]);
            out.push(inputs.data()[bi * p + i]);
        }
    }
    Tensor::raw(vec![b * p, d + 1], out)
}

/// Uniform draws on `±√(6/(fan_in+fan_out))`.
pub(crate) fn glorot(rng: &mut RngState, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = a * (2.0 * rng.next_f64() - 1.0);
    }
}
