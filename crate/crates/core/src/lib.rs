pub mod activation;
pub mod autodiff;
pub mod conv;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod jet;
pub mod rng;
pub mod tensor;
pub mod ann;
pub mod operators;
pub mod residual;
pub mod solvers;
pub mod stochastic;
pub mod experiments;
pub mod train;
