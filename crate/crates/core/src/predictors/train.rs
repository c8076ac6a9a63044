use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nets::Trainable;
use crate::error::{domain, Error, Result};
use crate::masking::{PatchGenerator, Sample};
use crate::rng::{stream, tag};

/// Indexed training data. Sources may generate samples on demand.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn dim(&self) -> usize;

    /// Writes sample `index` into `row` and returns its label.
    fn fill(&self, index: usize, row: &mut [f64]) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn dim(&self) -> usize {
        self.first().map_or(0, Sample::dim)
    }

    fn fill(&self, index: usize, row: &mut [f64]) -> f64 {
        let s = &self[index];
        row.copy_from_slice(&s.values);
        f64::from(s.label.unwrap_or(0))
    }
}

/// `count` patch images drawn on demand from per-index streams.
#[derive(Clone, Debug)]
pub struct GeneratorSource {
    pub generator: PatchGenerator,
    pub seed: u64,
    pub count: usize,
}

impl SampleSource for GeneratorSource {
    fn len(&self) -> usize {
        self.count
    }

    fn dim(&self) -> usize {
        self.generator.geometry.dim()
    }

    fn fill(&self, index: usize, row: &mut [f64]) -> f64 {
        let (s, _) = self.generator.sample_at(self.seed, index as u64);
        row.copy_from_slice(&s.values);
        f64::from(s.label.unwrap_or(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam at 0.001 (the CNN setting).
    pub fn adam(seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.001,
            epochs: 1,
            batch_size: 64,
            seed,
        }
    }

    /// SGD at 0.01 (the FCN setting).
    pub fn sgd(seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.01,
            epochs: 1,
            batch_size: 64,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        // a zero rate is allowed: it leaves the parameters untouched
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || self.epochs == 0
            || self.batch_size == 0
        {
            return Err(domain(
                "training needs learning rate >= 0, epochs >= 1, batch size >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data loss before training and after each epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

const LOSS_CHUNK: usize = 4096;

fn full_loss<M: Trainable>(model: &M, source: &(impl SampleSource + ?Sized)) -> Result<f64> {
    let dim = source.dim();
    let n = source.len();
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(LOSS_CHUNK)
        .map(|a| (a, (a + LOSS_CHUNK).min(n)))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut rows = vec![0.0; (b - a) * dim];
            let labels: Vec<f64> = (a..b)
                .zip(rows.chunks_exact_mut(dim))
                .map(|(i, r)| source.fill(i, r))
                .collect();
            Ok(model.loss(&rows, &labels)? * (b - a) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum::<f64>() / n as f64)
}

/// Minibatch training on the mean binary cross-entropy.
///
/// Each epoch visits the samples in a seed-derived random order. Updates are
/// applied sequentially, so the result depends only on the model, the data
/// and `cfg`.
pub fn train<M: Trainable>(
    model: &mut M,
    source: &(impl SampleSource + ?Sized),
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(domain("training set is empty"));
    }
    if source.dim() != model.dim() {
        return Err(domain(format!(
            "model expects dimension {}, data has {}",
            model.dim(),
            source.dim()
        )));
    }
    let dim = source.dim();
    let mut params = model.params();
    let mut adam = AdamState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut trace = vec![full_loss(model, source)?];
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut rows = Vec::with_capacity(cfg.batch_size * dim);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            rows.resize(batch.len() * dim, 0.0);
            labels.clear();
            for (&i, r) in batch.iter().zip(rows.chunks_exact_mut(dim)) {
                labels.push(source.fill(i, r));
            }
            let (loss, grad) = model.loss_and_grad(&rows, &labels)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    step,
                    message: format!("non-finite loss {loss}"),
                });
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam => adam.step(&mut params, &grad, cfg.learning_rate),
            }
            model.set_params(&params);
            step += 1;
        }
        let loss = full_loss(model, source)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("non-finite loss {loss} after epoch {epoch}"),
            });
        }
        trace.push(loss);
    }
    Ok(TrainReport {
        loss_trace: trace,
        steps: step,
    })
}

/// Relative error `|g - g_fd| / max(|g|, |g_fd|)` (Euclidean norms) between the
/// analytic gradient and central finite differences with step `h`.
pub fn gradient_check<M: Trainable>(
    model: &M,
    rows: &[f64],
    labels: &[f64],
    h: f64,
) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(rows, labels)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(base.len());
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_params(&p);
        let up = probe.loss(rows, labels)?;
        p[i] = base[i] - h;
        probe.set_params(&p);
        let down = probe.loss(rows, labels)?;
        p[i] = base[i];
        numeric.push((up - down) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    Ok(if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    })
}
