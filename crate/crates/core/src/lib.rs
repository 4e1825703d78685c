//! Surrogate-guided synthetic data generation for expensive simulations.
//!
//! The pipeline has two learning stages and one analysis stage. A
//! gradient-boosted tree surrogate is fitted on a small simulated dataset and
//! stands in for the simulator. A PPO agent is then trained against a
//! one-step environment whose reward is the surrogate's prediction, so the
//! agent learns to emit parameter combinations the surrogate scores highly
//! while staying inside the physically plausible region. Finally, Bayesian
//! optimization over the ranges spanned by the generated data maps which
//! parameters drive the outcome.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`data`] — parameter schemas, CSV ingestion, scaling, derived features,
//!   splitting.
//! * [`surrogate`] — from-scratch gradient-boosted decision trees plus
//!   classification/regression metrics.
//! * [`env`] — the one-step generative RL environment.
//! * [`ppo`] — from-scratch proximal policy optimization with a
//!   diagonal-Gaussian policy.
//! * [`generator`] — batch synthesis, validity filtering, range summaries,
//!   outcome histograms.
//! * [`bayesopt`] — Gaussian-process expected-improvement optimization and
//!   contour grids.
//! * [`oracle`] — analytic stand-ins for the rupture and nano-scratching
//!   simulators, used to verify the pipeline end to end.

pub mod bayesopt;
pub mod data;
pub mod env;
mod error;
pub mod generator;
pub mod oracle;
pub mod ppo;
pub mod surrogate;
pub mod util;

pub use error::{Error, Result};
