//! Preference-based Bayesian optimization.
//!
//! A Gaussian-process latent utility is observed only through pairwise
//! comparisons with three outcomes (worse, equivalent, better) under a
//! tie-aware Bradley-Terry likelihood. The posterior over utilities and
//! kernel length-scales is approximated by a mean-field Gaussian fitted with
//! reparameterized stochastic gradients, and new query points come from
//! expected improvement integrated over that approximation.
//!
//! [`ExperimentState`] is the entry point for interactive use;
//! [`benchmark`] reproduces the simulated-user evaluation protocol.

pub mod acquisition;
pub mod benchmark;
pub mod design;
mod error;
pub mod experiment;
pub mod kernel;
pub mod math;
pub mod preference;
mod rng;
pub mod variational;

pub use acquisition::{ei_closed_form, AcquisitionKind, ProposalConfig};
pub use error::{Error, Result};
pub use experiment::{BoundingBox, ExperimentConfig, ExperimentState, Phase, RefitSchedule, StateDocument};
pub use kernel::{KernelHyper, Point};
pub use preference::{ComparisonRecord, ModelHyper, Outcome};
pub use rng::split_seed;
pub use variational::{FitConfig, VariationalParams};
