//! Simulation of balanced-homodyne quadrature data and a small dense
//! network that labels 160-bin quadrature histograms as classical or
//! nonclassical.
//!
//! The crate is organised bottom-up:
//!
//! - [`states`]: closed-form quadrature densities under detection loss
//! - [`sampler`]: seeded inverse-CDF sampling and the event-file format
//! - [`features`]: normalized histograms over `[-8, 8]`
//! - [`nn`]: the classifier, its training loop and model files
//! - [`pipeline`]: simulated training corpora
//! - [`classify`]: verdicts, the variance baseline and parameter sweeps
//! - [`cli`]: the `quadnc` command line

pub mod classify;
pub mod cli;
pub mod error;
pub mod features;
pub mod nn;
pub mod pipeline;
mod quad;
pub mod sampler;
pub mod seed;
pub mod states;

pub use error::{Error, Result};
pub use features::FeatureVector;
pub use nn::{NetworkModel, TrainConfig};
pub use sampler::QuadratureBatch;
pub use states::{ClassLabel, Family, StateSpec};
