//! Sparse linear regression with the quantile universal threshold.
//!
//! The crate fits the lasso by coordinate descent, selects its penalty with
//! the quantile universal threshold (QUT) or one of the classical rules
//! (cross-validation, BIC, SURE, scaled lasso), estimates the noise level,
//! and runs the simulation protocols used to compare those rules.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abel;
pub mod design;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;

pub mod lasso;
pub mod metrics;
pub mod refit;
pub mod rng;
pub mod selectors;
pub mod thresholds;
pub mod variance;

pub use abel::{run_abel_experiment, AbelConfig, SnrConvention};
pub use design::{standardize, DesignMatrix, ResponseVector, StandardizeOptions, TrueModel};
pub use error::{Error, Result};
pub use experiments::{
    run_phase_transition, run_split_eval, run_synthetic, ExperimentReport, PhaseTransitionConfig, SplitEvalConfig,
    SyntheticConfig,
};
pub use grid::LambdaGrid;
pub use io::TabularDataset;
pub use lasso::{fit_lasso, fit_path, lambda_max, soft_threshold, LassoFit, LassoOptions, LassoSolver};
pub use refit::refit_least_squares;
pub use selectors::{Rule, SelectionOutcome};
pub use thresholds::{alpha_p, qut_monte_carlo, NullQuantileEstimate};
pub use variance::{rcv_variance, residual_variance, VarianceEstimate};
