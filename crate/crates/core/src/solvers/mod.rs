//! Reference solvers for periodic semilinear heat equations
//! `∂u/∂t = cΔu + F(u)` and Gaussian-random-field input samplers.
//!
//! All three discretizations share the linearly implicit scheme
//!
//! ```text
//! u_mid   = (I − dt/4·A)⁻¹ [(I + dt/4·A) u_n + dt/2·F(u_n)]
//! u_{n+1} = (I − dt/2·A)⁻¹ [(I + dt/2·A) u_n + dt·F(u_mid)]
//! ```
//!
//! with `A` the discrete diffusion operator.

pub mod fdm;
pub mod fem;
pub mod grf;
pub mod heat;
pub mod linalg;
pub mod spectral;

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// Pure diffusion.
    Heat,
    /// `−½ ∂(u²)/∂x` (first axis).
    BurgersConservative,
    /// `u − u³`.
    AllenCahn,
    /// `k(u − u³) + g` with a source field `g`.
    ReactionWithSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemilinearPde {
    pub lengths: Vec<f64>,
    pub c: f64,
    pub horizon: f64,
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub rate: f64,
    #[serde(skip)]
    pub source: Option<GridFunction>,
}

impl SemilinearPde {
    pub fn new(lengths: Vec<f64>, c: f64, horizon: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        let p = SemilinearPde { lengths, c, horizon, nonlinearity, rate: 0.0, source: None };
        p.validate()?;
        Ok(p)
    }

    pub fn burgers() -> Self {
        SemilinearPde::new(vec![2.0 * PI], 0.1, 1.0, Nonlinearity::BurgersConservative).unwrap()
    }

    pub fn allen_cahn(d: usize) -> Self {
        SemilinearPde::new(vec![1.0; d], 0.002, 3.0, Nonlinearity::AllenCahn).unwrap()
    }

    pub fn reaction_diffusion() -> Self {
        let mut p = SemilinearPde::new(vec![2.0], 0.05, 1.0, Nonlinearity::ReactionWithSource).unwrap();
        p.rate = 2.0;
        p
    }

    pub fn heat(lengths: Vec<f64>, c: f64, horizon: f64) -> Self {
        SemilinearPde::new(lengths, c, horizon, Nonlinearity::Heat).unwrap()
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.iter().any(|&s| !(s > 0.0)) {
            return invalid("domain lengths must be positive");
        }
        if !(self.c > 0.0) || !(self.horizon > 0.0) {
            return invalid("diffusion coefficient and horizon must be positive");
        }
        Ok(())
    }

    /// `F(u)` at grid values for the pointwise nonlinearities.
    pub(crate) fn pointwise(&self, u: f64, g: f64) -> f64 {
        match self.nonlinearity {
            Nonlinearity::Heat | Nonlinearity::BurgersConservative => 0.0,
            Nonlinearity::AllenCahn => u - u * u * u,
            Nonlinearity::ReactionWithSource => self.rate * (u - u * u * u) + g,
        }
    }

    fn source_values(&self, extents: &[usize]) -> Result<Option<&[f64]>> {
        match (&self.source, self.nonlinearity) {
            (Some(g), Nonlinearity::ReactionWithSource) => {
                if g.extents() != extents {
                    return invalid(format!("source grid {:?} differs from solver grid {extents:?}", g.extents()));
                }
                Ok(Some(g.data()))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spectral,
    Fdm,
    Fem,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Spectral => "spectral",
            Method::Fdm => "fdm",
            Method::Fem => "fem",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Method::Spectral),
            "fdm" => Ok(Method::Fdm),
            "fem" => Ok(Method::Fem),
            _ => Err(Error::InvalidInput(format!("unknown solver method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Grid points per axis.
    pub n: usize,
    /// Time steps.
    pub steps: usize,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_true() -> bool {
    true
}

impl SolverConfig {
    pub fn new(method: Method, n: usize, steps: usize) -> Result<Self> {
        let c = SolverConfig { method, n, steps, dealias: true };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.steps < 1 {
            return invalid(format!("solver needs N ≥ 4 and M ≥ 1, got N={} M={}", self.n, self.steps));
        }
        Ok(())
    }
}

/// `u(T)` from `u(0) = g0`.
pub fn solve(pde: &SemilinearPde, g0: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    pde.validate()?;
    cfg.validate()?;
    if g0.dims() != pde.dims() || g0.extents().iter().any(|&e| e != cfg.n) {
        return invalid(format!("initial value grid {:?} does not match N={} in {} dimensions", g0.extents(), cfg.n, pde.dims()));
    }
    match cfg.method {
        Method::Spectral => spectral::spectral_solve(pde, g0, cfg),
        Method::Fdm => fdm::fdm_solve(pde, g0, cfg),
        Method::Fem => fem::fem_solve(pde, g0, cfg),
    }
}

/// The operator `𝒮` of the learning problem: initial value → `u(T)`, or for
/// the reaction-diffusion problem source → `u(T)` with `u(0) = 0`.
pub fn solve_operator(pde: &SemilinearPde, input: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    if pde.nonlinearity == Nonlinearity::ReactionWithSource {
        let mut p = pde.clone();
        p.source = Some(input.clone());
        let zero = GridFunction::zeros(&input.lengths, input.extents());
        solve(&p, &zero, cfg)
    } else {
        solve(pde, input, cfg)
    }
}

pub(crate) fn check_finite(u: &[f64], step: usize) -> Result<()> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite solution value at step {step}")));
    }
    Ok(())
}
