//! Stochastic reformulations of heat and semilinear parabolic PDEs:
//! forward SDE paths, deep BSDE and deep Kolmogorov losses, and a discrete
//! conditional-expectation oracle.

pub mod bsde;
pub mod condexp;
pub mod kolmogorov;
pub mod sde;

pub use bsde::{bsde_rollout, bsde_terminal_loss, AnalyticControls, BsdeBatch, BsdeControls, Controls};
pub use condexp::{pythagoras_check, DiscreteProbSpace};
pub use kolmogorov::{kolmogorov_full_loss, kolmogorov_terminal_loss, KolmogorovBatch, KolmogorovModel, XiLaw};
pub use sde::{euler_maruyama, BrownianPath, Generator, SdeSpec};
