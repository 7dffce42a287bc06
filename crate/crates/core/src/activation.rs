use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Gelu,
    Relu,
    Identity,
}

/// Highest derivative order available for the smooth activations.
pub const MAX_ORDER: usize = 4;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

impl Activation {
    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Gelu => x * std_normal_cdf(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// `order`-th derivative at `x`.
    ///
    /// relu is treated as piecewise linear: its first derivative is the step
    /// function and higher derivatives vanish almost everywhere. Callers that
    /// need genuine second derivatives must check [`Activation::is_smooth`].
    pub fn derivative(self, order: usize, x: f64) -> f64 {
        match (self, order) {
            (_, 0) => self.apply(x),
            (Activation::Identity, 1) => 1.0,
            (Activation::Identity, _) => 0.0,
            (Activation::Relu, 1) => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            (Activation::Relu, _) => 0.0,
            (Activation::Tanh, k) => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match k {
                    1 => s,
                    2 => -2.0 * t * s,
                    3 => (6.0 * t * t - 2.0) * s,
                    4 => (16.0 * t - 24.0 * t * t * t) * s,
                    _ => unreachable!("derivative order checked by caller"),
                }
            }
            (Activation::Gelu, k) => {
                let p = std_normal_pdf(x);
                match k {
                    1 => std_normal_cdf(x) + x * p,
                    2 => p * (2.0 - x * x),
                    3 => p * (x * x * x - 4.0 * x),
                    4 => p * (-x * x * x * x + 7.0 * x * x - 4.0),
                    _ => unreachable!("derivative order checked by caller"),
                }
            }
        }
    }

    pub fn check_order(self, order: usize) -> Result<()> {
        if order > MAX_ORDER {
            return Err(Error::InvalidInput(format!("derivative order {order} exceeds {MAX_ORDER}")));
        }
        Ok(())
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "identity" | "id" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidInput(format!("unknown activation '{other}'"))),
        }
    }
}
