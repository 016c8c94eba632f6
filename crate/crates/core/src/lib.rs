//! Semiparametric Bayesian multivariate Hawkes processes whose excitation
//! functions are dependent Dirichlet-process mixtures of scaled Beta kernels.
//!
//! The crate provides likelihood evaluation, simulation, a
//! Metropolis-within-Gibbs sampler, a stochastic variational engine,
//! evaluation metrics and LOBSTER order-flow ingestion.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod likelihood;
pub mod linalg;
pub mod lobster;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod svi;

pub use error::{Error, Result};
pub use kernel::{beta_cdf, beta_ln_pdf, beta_pdf, BetaComponent, BetaMixture, ExcitationModel, LagFeatures};
pub use likelihood::{
    augmented_log_likelihood, candidate_parents, intensity, log_likelihood, ParentIndex, PairTable,
};
pub use linalg::{expected_rates, spectral_radius};
pub use model::{
    Allocation, Compensator, EventSequence, HawkesParams, Hyperparams, LatentState, ShapePrior, Source, Variant,
};
