//! Second-order Taylor jets recorded on a [`Tape`].
//!
//! A jet carries a value together with first and second directional
//! derivatives along a fixed input direction. Each component is an ordinary
//! tape node, so a loss built from `d2` can itself be differentiated in θ.

use crate::activation::Activation;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Value plus directional derivatives; `None` stands for an all-zero part.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub v: Var,
    pub d1: Option<Var>,
    pub d2: Option<Var>,
}

impl Jet {
    pub fn constant(v: Var) -> Jet {
        Jet { v, d1: None, d2: None }
    }

    /// Input jet `x + s·dir` with zero curvature.
    pub fn seed(v: Var, dir: Var) -> Jet {
        Jet { v, d1: Some(dir), d2: None }
    }
}

fn opt_add(t: &mut Tape, a: Option<Var>, b: Option<Var>) -> Result<Option<Var>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(t.add(a, b)?),
        (a, None) => a,
        (None, b) => b,
    })
}

pub fn add(t: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    Ok(Jet { v: t.add(a.v, b.v)?, d1: opt_add(t, a.d1, b.d1)?, d2: opt_add(t, a.d2, b.d2)? })
}

pub fn sub(t: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    let nb = scale(t, b, -1.0)?;
    add(t, a, &nb)
}

pub fn scale(t: &mut Tape, a: &Jet, c: f64) -> Result<Jet> {
    let d1 = match a.d1 {
        Some(d) => Some(t.scale(d, c)?),
        None => None,
    };
    let d2 = match a.d2 {
        Some(d) => Some(t.scale(d, c)?),
        None => None,
    };
    Ok(Jet { v: t.scale(a.v, c)?, d1, d2 })
}

/// Product rule up to second order.
pub fn mul(t: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    let v = t.mul(a.v, b.v)?;
    let mut d1 = None;
    if let Some(x) = a.d1 {
        d1 = Some(t.mul(x, b.v)?);
    }
    if let Some(y) = b.d1 {
        let p = t.mul(a.v, y)?;
        d1 = opt_add(t, d1, Some(p))?;
    }
    let mut d2 = None;
    if let Some(x) = a.d2 {
        d2 = Some(t.mul(x, b.v)?);
    }
    if let Some(y) = b.d2 {
        let p = t.mul(a.v, y)?;
        d2 = opt_add(t, d2, Some(p))?;
    }
    if let (Some(x), Some(y)) = (a.d1, b.d1) {
        let p = t.mul(x, y)?;
        let p = t.scale(p, 2.0)?;
        d2 = opt_add(t, d2, Some(p))?;
    }
    Ok(Jet { v, d1, d2 })
}

/// `x Wᵀ + b` applied to every component (bias only on the value).
pub fn linear(t: &mut Tape, a: &Jet, w: Var, b: Option<Var>) -> Result<Jet> {
    let mut v = t.matmul_nt(a.v, w)?;
    if let Some(b) = b {
        v = t.add_row_bias(v, b)?;
    }
    let d1 = match a.d1 {
        Some(d) => Some(t.matmul_nt(d, w)?),
        None => None,
    };
    let d2 = match a.d2 {
        Some(d) => Some(t.matmul_nt(d, w)?),
        None => None,
    };
    Ok(Jet { v, d1, d2 })
}

/// Elementwise activation: `σ(z)`, `σ'(z)·dz`, `σ''(z)·dz² + σ'(z)·d²z`.
pub fn activate(t: &mut Tape, a: &Jet, act: Activation) -> Result<Jet> {
    let v = t.act(a.v, act, 0)?;
    if a.d1.is_none() && a.d2.is_none() {
        return Ok(Jet::constant(v));
    }
    if a.d1.is_some() && !act.is_smooth() {
        return Err(Error::NonSmooth(format!("{act} has no second derivative")));
    }
    let s1 = t.act(a.v, act, 1)?;
    let d1 = match a.d1 {
        Some(d) => Some(t.mul(s1, d)?),
        None => None,
    };
    let mut d2 = match a.d2 {
        Some(d) => Some(t.mul(s1, d)?),
        None => None,
    };
    if let Some(d) = a.d1 {
        let s2 = t.act(a.v, act, 2)?;
        let dd = t.square(d)?;
        let p = t.mul(s2, dd)?;
        d2 = opt_add(t, d2, Some(p))?;
    }
    Ok(Jet { v, d1, d2 })
}

/// Materialize an optional component as a tensor of the value's shape.
pub fn part(t: &mut Tape, like: Var, p: Option<Var>) -> Var {
    match p {
        Some(p) => p,
        None => {
            let shape = t.value(like).shape().to_vec();
            t.constant(Tensor::zeros(&shape))
        }
    }
}

/// `vᵀ (Hess f)(x) v` for a traced scalar function of a row vector `[1, n]`.
pub fn input_directional_second<F>(f: F, x: &[f64], v: &[f64]) -> Result<f64>
where
    F: Fn(&mut Tape, &Jet) -> Result<Jet>,
{
    if x.len() != v.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!("point of length {} with direction of length {}", x.len(), v.len())));
    }
    let mut t = Tape::new();
    let xv = t.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let dv = t.constant(Tensor::new(vec![1, v.len()], v.to_vec())?);
    let out = f(&mut t, &Jet::seed(xv, dv))?;
    if t.value(out.v).len() != 1 {
        return Err(Error::ShapeMismatch("directional second derivative needs a scalar function".into()));
    }
    Ok(match out.d2 {
        Some(d) => t.scalar_value(d),
        None => 0.0,
    })
}
