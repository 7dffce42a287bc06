use crate::ann::MlpArchitecture;
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, shape, Result};
use crate::operators::grid_coords;
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};

/// Unstacked DeepONet with the grid points as sensors:
/// `⟨ℬ(u(x_1), …, u(x_m)), 𝒯(y)⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetOperator {
    pub extents: Vec<usize>,
    pub branch: MlpArchitecture,
    pub trunk: MlpArchitecture,
}

impl DeepOnetOperator {
    pub fn new(extents: Vec<usize>, branch: MlpArchitecture, trunk: MlpArchitecture) -> Result<Self> {
        let s = DeepOnetOperator { extents, branch, trunk };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let m: usize = self.extents.iter().product();
        if self.extents.is_empty() || m == 0 {
            return invalid("operator grid needs positive extents");
        }
        if self.branch.input_dim() != m {
            return shape(format!("branch takes {} sensors, grid has {m}", self.branch.input_dim()));
        }
        if self.trunk.input_dim() != self.extents.len() {
            return shape(format!("trunk takes {} coordinates, domain has {}", self.trunk.input_dim(), self.extents.len()));
        }
        if self.branch.output_dim() != self.trunk.output_dim() {
            return shape("branch and trunk latent dimensions differ");
        }
        Ok(())
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn latent(&self) -> usize {
        self.branch.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let nb = self.branch.param_count();
        self.branch.init_into(rng, &mut p.values[..nb]);
        self.trunk.init_into(rng, &mut p.values[nb..]);
        p
    }

    /// Trunk outputs at query rows `y [Q, d]`.
    pub fn trunk_forward(&self, t: &mut Tape, theta: Var, y: Var) -> Result<Var> {
        self.trunk.forward(t, theta, self.branch.param_count(), y)
    }

    pub fn branch_forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let xv = t.constant(x.clone());
        self.branch.forward(t, theta, 0, xv)
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let p: usize = self.extents.iter().product();
        let b = self.branch_forward(t, theta, x)?;
        let y = t.constant(Tensor::raw(vec![p, self.extents.len()], grid_coords(&self.extents)));
        let tr = self.trunk_forward(t, theta, y)?;
        t.matmul_nt(b, tr)
    }

    /// Output at one query point.
    pub fn eval_at(&self, theta: &[f64], sensors: &[f64], y: &[f64]) -> Result<f64> {
        let nb = self.branch.param_count();
        if theta.len() != self.param_count() {
            return shape("parameter count mismatch");
        }
        let b = self.branch.apply(&theta[..nb], sensors)?;
        let tr = self.trunk.apply(&theta[nb..], y)?;
        Ok(b.iter().zip(&tr).map(|(a, c)| a * c).sum())
    }
}
