//! Self-training for long-tailed relation classification.
//!
//! The crate simulates pseudo-label self-training on a synthetic scene
//! benchmark whose hidden ground truth is known, so the quality of every
//! pseudo-label can be audited. The main pieces are:
//!
//! * [`label_space`]: predicate catalog, predictions, scenes and datasets.
//! * [`synthgen`]: the Zipf-distributed benchmark generator.
//! * [`classifier`]: a small differentiable predicate classifier with
//!   hand-written gradients.
//! * [`threshold`]: class-specific adaptive thresholding with momentum and
//!   the fixed/constant/frequency-weighted/Dash baselines.
//! * [`selftrain`]: the three-term self-training loop.
//! * [`gsl`]: the edge scorer with Gumbel sampling used to gate candidates.
//! * [`metrics`]: Recall@K, mean Recall@K, F@K and the pseudo-label audit.
//! * [`preset`]: the frozen benchmark configuration.

pub mod classifier;
pub mod error;
pub mod exec;
pub mod gsl;
pub mod label_space;
pub mod metrics;
pub mod preset;
pub mod rng;
pub mod selftrain;
pub mod synthgen;
pub mod textio;
pub mod threshold;

pub use error::{Error, Result};
