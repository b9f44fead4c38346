pub mod matrix;
pub mod sim;

pub use matrix::{lambda_bar, pf_eigen, pf_for, semigroup_residual, LambdaBar, MeanMatrix, PfResult};
pub use sim::{run_h_herds, tau_leaf_probability, HHerdsEngine, HHerdsInit, HRunChecks, HRunResult};
