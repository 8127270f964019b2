//! Forest-mixture variational inference for Gaussian deep exponential
//! families: a Jensen lower bound on the ELBO that separates across latents,
//! the fully parallel FM algorithm built on it, coordinate-ascent baselines,
//! experiment generators and a config-driven runner.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod fm;
pub mod generators;
pub mod linalg;
pub mod model;

pub use baselines::{
    block_round, block_run, blocks_conditionally_independent, cavi_run, cavi_update, independent_components,
    BlockPartition, CoordinateAscent,
};
pub use error::{Error, Result};
pub use fm::{fm_bound, fm_run, fm_variational_step, jensen_gap, optimal_aux, AuxParams, FmSolver};
pub use linalg::{Matrix, SparsePattern};
pub use model::{
    elbo, exact_posterior, log_marginal_likelihood, ridge_loss, ridge_optimum, within_relative, ConvergenceTrace,
    GaussianDefModel, Observation, Posterior, TraceRow, VariationalState,
};
