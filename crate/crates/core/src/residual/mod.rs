//! Physics-informed losses: PINN residuals for boundary and initial value
//! problems, the Stefan free-boundary problem, and PINO composite risks.

pub mod pinn;
pub mod pino;
pub mod stefan;

pub use pinn::{pinn_bvp_loss, pinn_ivp_loss, BoxDomain, BvpProblem, IvpProblem, PinnBatch, PointDerivs, Residual};
pub use pino::{pino_risk, PinoConfig, PinoProblem, PinoRisk};
pub use stefan::{stefan_loss, StefanBatch, StefanNets, StefanProblem};
