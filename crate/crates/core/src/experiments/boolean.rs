use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{csv_text, stage, EcdfSeries};
use crate::bounds::BoundRecord;
use crate::error::{domain, Error, Result};
use crate::explain::{explain_feature, SummandConfig};
use crate::masking::{boolean_sampler, BooleanGenerator, BooleanMasking, Masker};
use crate::predictors::boolean_truth;
use crate::rng::derive_seed;

fn default_k() -> usize {
    2
}
fn default_n() -> usize {
    5
}
fn default_samples() -> usize {
    10
}
fn default_tests() -> usize {
    1000
}
fn default_one() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.05
}
fn default_important_mean() -> f64 {
    4.0
}
fn default_threshold() -> f64 {
    3.0
}
fn default_budget() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleanConfig {
    pub seed: u64,
    /// Blocks.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Block width.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Positive samples explained.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Null batches per SHAPLIT test.
    #[serde(default = "default_tests")]
    pub tests_k: usize,
    #[serde(default = "default_one")]
    pub tests_l: usize,
    /// Paired draws per gamma estimate.
    #[serde(default = "default_tests")]
    pub gamma_draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_important_mean")]
    pub important_mean: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_masking")]
    pub masking: BooleanMaskingMode,
    /// Sample indices scanned for positives.
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Keep only positives where, in every block, the important coordinate is
    /// the only one past the threshold. Otherwise a noise coordinate can share
    /// the credit and the important feature no longer earns `1/k`.
    #[serde(default = "default_true")]
    pub single_firing: bool,
}

fn default_true() -> bool {
    true
}

/// Whether exactly the `important` coordinates reach the threshold.
fn fires_only_at(values: &[f64], threshold: f64, important: &[usize]) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(i, v)| (v.abs() >= threshold) == important.contains(&i))
}

/// Masking choice in configuration files; the oracle form takes the
/// important indices from each sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BooleanMaskingMode {
    Unimportant,
    Oracle,
    Mixture,
}

fn default_masking() -> BooleanMaskingMode {
    BooleanMaskingMode::Unimportant
}

impl BooleanConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults are complete")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BooleanFeature {
    pub sample: usize,
    pub feature: usize,
    pub phi: f64,
    /// Share of the feature's tests with `p_hat <= alpha`.
    pub rejection_fraction: f64,
    pub p_global: f64,
    pub within_bound: bool,
    pub records: Vec<BoundRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BooleanResult {
    pub sample_indices: Vec<u64>,
    pub features: Vec<BooleanFeature>,
    pub mean_phi: f64,
    pub mean_rejection_fraction: f64,
    pub all_within_bound: bool,
    /// Pooled over features; every feature has the same number of tests, so
    /// this equals the average of the per-feature ECDFs.
    pub ecdf_p: EcdfSeries,
    pub ecdf_bound: EcdfSeries,
}

impl BooleanResult {
    /// Both ECDFs on the grid `0, 0.001, ..., 1`.
    pub fn ecdf_csv(&self) -> String {
        csv_text(
            &["x", "p_hat", "one_minus_gamma"],
            (0..=1000).map(|i| {
                let x = i as f64 / 1000.0;
                vec![
                    x.to_string(),
                    self.ecdf_p.at(x).to_string(),
                    self.ecdf_bound.at(x).to_string(),
                ]
            }),
        )
    }
}

pub fn run_boolean(cfg: &BooleanConfig) -> Result<BooleanResult> {
    if cfg.samples == 0 || cfg.tests_k == 0 || cfg.tests_l == 0 || cfg.gamma_draws == 0 {
        return Err(domain("sample, K, L and M counts must be at least 1"));
    }
    let generator = BooleanGenerator {
        important_mean: cfg.important_mean,
        threshold: cfg.threshold,
        ..BooleanGenerator::new(cfg.k, cfg.n)?
    };
    let f = boolean_truth(cfg.k, cfg.n, cfg.threshold)?;
    let sample_seed = derive_seed(cfg.seed, &[stage::SAMPLES]);
    let mut positives = Vec::with_capacity(cfg.samples);
    let mut sample_indices = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.budget {
        if positives.len() == cfg.samples {
            break;
        }
        let (s, important) = generator.sample_at(sample_seed, i);
        let keep = s.label == Some(1)
            && (!cfg.single_firing || fires_only_at(&s.values, cfg.threshold, &important));
        if keep {
            positives.push((s, important));
            sample_indices.push(i);
        }
    }
    if positives.len() < cfg.samples {
        return Err(Error::Generation(format!(
            "found {} of {} positive samples within {} draws",
            positives.len(),
            cfg.samples,
            cfg.budget
        )));
    }

    let mut features = Vec::new();
    for (si, (sample, important)) in positives.iter().enumerate() {
        let mode = match cfg.masking {
            BooleanMaskingMode::Unimportant => BooleanMasking::Unimportant,
            BooleanMaskingMode::Mixture => BooleanMasking::Mixture,
            BooleanMaskingMode::Oracle => BooleanMasking::Oracle {
                important: important.clone(),
            },
        };
        let sampler = boolean_sampler(cfg.k, cfg.n, cfg.important_mean, &mode)?;
        let masker = Masker::singletons(Arc::new(sampler))?;
        for &j in important {
            let summands = SummandConfig {
                k: cfg.tests_k,
                l: cfg.tests_l,
                m: cfg.gamma_draws,
                alpha: cfg.alpha,
                seed: derive_seed(cfg.seed, &[stage::TESTS, si as u64]),
            };
            let rep = explain_feature(&f, &sample.values, &masker, j, &summands)?;
            let rejected = rep.records.iter().filter(|r| r.p <= cfg.alpha).count();
            features.push(BooleanFeature {
                sample: si,
                feature: j,
                phi: rep.phi,
                rejection_fraction: rejected as f64 / rep.records.len() as f64,
                p_global: rep.global.p_global,
                within_bound: rep.all_within_bound(),
                records: rep.records,
            });
        }
    }
    let count = features.len() as f64;
    let ps = features
        .iter()
        .flat_map(|f| f.records.iter().map(|r| r.p))
        .collect();
    let bounds = features
        .iter()
        .flat_map(|f| f.records.iter().map(|r| r.reported_bound))
        .collect();
    Ok(BooleanResult {
        sample_indices,
        mean_phi: features.iter().map(|f| f.phi).sum::<f64>() / count,
        mean_rejection_fraction: features.iter().map(|f| f.rejection_fraction).sum::<f64>() / count,
        all_within_bound: features.iter().all(|f| f.within_bound),
        features,
        ecdf_p: EcdfSeries::new("p_hat", ps),
        ecdf_bound: EcdfSeries::new("one_minus_gamma", bounds),
    })
}
