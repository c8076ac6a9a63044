//! Predictors `f: R^n -> [0, 1]`.
//!
//! Every predictor is deterministic at inference time and safe to call from
//! many threads. Batches are passed as flat row-major slices of length
//! `rows * dim`.

mod external;
mod nets;
mod train;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use external::{ExternalPredictor, DEFAULT_MAX_BATCH};
pub use nets::{make_cnn, make_fcn, Cnn, Fcn, Trainable, DEFAULT_HIDDEN};
pub use train::{
    gradient_check, train, GeneratorSource, Optimizer, SampleSource, TrainConfig, TrainReport,
};

use crate::error::{domain, Result};
use crate::masking::boolean_rule;

pub trait Predictor: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_batch(x)?[0])
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        (**self).predict_batch(rows)
    }
}

/// Number of rows in a flat batch, or a domain error if the length is not a
/// positive multiple of `dim`.
pub(crate) fn batch_rows(dim: usize, rows: &[f64]) -> Result<usize> {
    if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
        return Err(domain(format!(
            "batch of length {} is not a whole number of rows of dimension {dim}",
            rows.len()
        )));
    }
    Ok(rows.len() / dim)
}

/// The ground-truth Boolean-block function: 1 iff every block of width `n`
/// holds an entry with `|value| >= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BooleanTruth {
    pub k: usize,
    pub n: usize,
    pub threshold: f64,
}

pub fn boolean_truth(k: usize, n: usize, threshold: f64) -> Result<BooleanTruth> {
    if k == 0 || n == 0 {
        return Err(domain("Boolean truth needs k, n >= 1"));
    }
    Ok(BooleanTruth { k, n, threshold })
}

impl Predictor for BooleanTruth {
    fn dim(&self) -> usize {
        self.k * self.n
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        batch_rows(self.dim(), rows)?;
        Ok(rows
            .chunks_exact(self.dim())
            .map(|r| f64::from(boolean_rule(r, self.k, self.n, self.threshold)))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub dim: usize,
    pub value: f64,
}

impl ConstantPredictor {
    pub fn new(dim: usize, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(domain(format!("constant output {value} is outside [0, 1]")));
        }
        Ok(ConstantPredictor { dim, value })
    }
}

impl Predictor for ConstantPredictor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.value; batch_rows(self.dim, rows)?])
    }
}

/// A predictor from a closure. The closure must return values in `[0, 1]`.
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnPredictor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnPredictor { dim, f }
    }
}

impl<F> fmt::Debug for FnPredictor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPredictor")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for FnPredictor<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        batch_rows(self.dim, rows)?;
        Ok(rows.chunks_exact(self.dim).map(&self.f).collect())
    }
}

/// `1[f(x) >= tau]`.
#[derive(Clone, Debug)]
pub struct Threshold01 {
    inner: Arc<dyn Predictor>,
    tau: f64,
}

pub fn threshold01(inner: Arc<dyn Predictor>, tau: f64) -> Threshold01 {
    Threshold01 { inner, tau }
}

impl Threshold01 {
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Predictor for Threshold01 {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .predict_batch(rows)?
            .into_iter()
            .map(|v| f64::from(u8::from(v >= self.tau)))
            .collect())
    }
}
