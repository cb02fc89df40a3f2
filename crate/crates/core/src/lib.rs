//! Bayesian sample inference: Gaussian belief updates, a closed-form encoder,
//! preconditioned predictors, ELBO and bits-per-dimension estimators, an
//! ancestral sampler and a deterministic trainer.

// Domain checks are written `!(x > 0.0)` so that NaN is rejected with them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod data;
pub mod elbo;
pub mod encoder;
pub mod error;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod trainer;

pub use error::{BsiError, Result};
