//! Penalized least squares on `(y, [F̂, Û])` with Lasso, SCAD or MCP
//! penalties on a masked subset of the covariate coefficients.
//!
//! The objective is `(1/2n)‖y − F̂γ − Ûβ‖² + Σ_{j penalized} p_λ(|β_j|)`;
//! the factor coefficients `γ` are never penalized.

mod cv;
mod noise;
mod penalty;
mod solver;

pub use cv::{cross_validate, fit_cv, lambda_grid, lambda_max, CvOptions, CvResult, CvRule};
pub use noise::{
    estimate_factor_adjusted_noise, estimate_noise_variance, noise_lambda, residual_variance,
    NoiseEstimator, NoiseVariance,
};
pub use penalty::{Penalty, PenaltyKind, DEFAULT_MCP_GAMMA, DEFAULT_SCAD_A};
pub use solver::{fit_penalized, PenalizedFit, PenalizedProblem, Solver, SolverOptions};
