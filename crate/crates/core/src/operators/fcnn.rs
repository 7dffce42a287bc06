use crate::activation::Activation;
use crate::ann::MlpArchitecture;
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::grid::interp_eval;
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};

/// Grid samples → fully-connected network → periodic interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcnnOperator {
    pub extents: Vec<usize>,
    /// Inner widths `l_1, …, l_{L−1}`.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl FcnnOperator {
    pub fn new(extents: Vec<usize>, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        let s = FcnnOperator { extents, hidden, activation };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extents.is_empty() || self.extents.contains(&0) {
            return invalid("operator grid needs positive extents");
        }
        self.mlp().map(|_| ())
    }

    pub fn mlp(&self) -> Result<MlpArchitecture> {
        let p: usize = self.extents.iter().product();
        let mut w = vec![p];
        w.extend_from_slice(&self.hidden);
        w.push(p);
        MlpArchitecture::new(w, self.activation)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn param_count(&self) -> usize {
        self.mlp().map(|m| m.param_count()).unwrap_or(0)
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        self.mlp().expect("validated").init(rng)
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let xv = t.constant(x.clone());
        self.mlp()?.forward(t, theta, 0, xv)
    }

    /// Continuous output `I(𝒩(samples))` at a point of `[0,1]^d`.
    pub fn eval_at(&self, theta: &[f64], samples: &Tensor, y: &[f64]) -> Result<f64> {
        let out = self.mlp()?.apply(theta, samples.data())?;
        interp_eval(&Tensor::new(self.extents.clone(), out)?, y)
    }
}
