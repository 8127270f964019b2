//! The forest mixture bound and the FM algorithm.
//!
//! Jensen's inequality over per-row simplex weights `eps_i` and split biases
//! `bhat_i` lower-bounds the ELBO by an objective that separates across the
//! latents of a layer. Alternating the closed-form optimum of `(eps, bhat)`
//! with the closed-form optimum of `q` updates every latent in parallel.

mod aux;
mod bound;
mod deep;
mod update;

pub use aux::{aux_objective, optimal_aux, optimal_aux_layer, AuxParams, BIAS_SPLIT_TOL, SIMPLEX_TOL};
pub use bound::{fm_bound, jensen_gap};
pub use deep::{deep_elbo, deep_fm_bound, deep_optimal_aux, DeepGaussianModel, DeepLayer};
pub use update::{fm_run, fm_variational_step, FmSolver};

/// Smallest chunk handed to a rayon worker; tiny models stay on one thread.
pub(crate) const PAR_MIN_LEN: usize = 256;
