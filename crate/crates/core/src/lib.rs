//! Exact Shapley values for model predictions under conditional masking,
//! the SHAPLIT / CRT / HRT randomization tests, and the p-value bounds that
//! tie Shapley summands to those tests.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiments;
pub mod explain;
pub mod games;
pub mod masking;
pub mod predictors;
pub mod report;
pub mod rng;
pub mod testing;

pub use error::{Error, PredictorError, Result};
