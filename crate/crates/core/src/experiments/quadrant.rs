use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::power::accuracy;
use super::{csv_text, stage};
use crate::error::{domain, Error, Result};
use crate::explain::{
    hierarchical_explain, precision_f1, region_truth, HierarchyConfig, Region, RegionReport,
    RetrievalScores, SelectionRule, SummandConfig,
};
use crate::masking::{
    make_mean_imputation, ConditionalSampler, Masker, Partition, PatchGenerator, PatchGeometry,
};
use crate::predictors::{
    make_cnn, threshold01, train, GeneratorSource, Predictor, SampleSource, TrainConfig,
};
use crate::rng::{derive_seed, stream};
use crate::testing::hrt;

fn default_d() -> usize {
    7
}
fn default_side() -> usize {
    4
}
fn default_train() -> usize {
    50_000
}
fn default_validation() -> usize {
    2_000
}
fn default_floor() -> f64 {
    0.95
}
fn default_one() -> usize {
    200
}
fn default_two() -> usize {
    50
}
fn default_comparison() -> usize {
    101
}
fn default_alpha() -> f64 {
    0.05
}
fn default_depth() -> usize {
    2
}
fn default_epochs() -> usize {
    1
}
fn default_budget() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrantConfig {
    pub seed: u64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_side")]
    pub r: usize,
    #[serde(default = "default_side")]
    pub s: usize,
    /// Noise variance; `1/d^4` when absent.
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Patch activation probability; `1 - (3/4)^(1/(r s))` when absent, so
    /// that a quarter of the natural images are positive.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_train")]
    pub train_samples: usize,
    #[serde(default = "default_validation")]
    pub validation_samples: usize,
    /// Minimum validation accuracy of the trained model.
    #[serde(default = "default_floor")]
    pub accuracy_floor: f64,
    #[serde(default = "default_one")]
    pub one_signal_images: usize,
    #[serde(default = "default_two")]
    pub two_signal_images: usize,
    /// Predicted-positive natural images in the HRT comparison.
    #[serde(default = "default_comparison")]
    pub comparison_images: usize,
    /// Natural images scanned for the comparison set.
    #[serde(default = "default_budget")]
    pub comparison_budget: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub rule: SelectionRule,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl QuadrantConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults are complete")
    }

    pub fn resolved_sigma2(&self) -> f64 {
        self.sigma2.unwrap_or((self.d as f64).powi(-4))
    }

    pub fn resolved_eta(&self) -> f64 {
        self.eta
            .unwrap_or_else(|| 1.0 - 0.75f64.powf(1.0 / (self.r * self.s) as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageKind {
    OneSignal,
    TwoSignal,
    Natural,
}

impl ImageKind {
    fn name(self) -> &'static str {
        match self {
            ImageKind::OneSignal => "one-signal",
            ImageKind::TwoSignal => "two-signal",
            ImageKind::Natural => "natural",
        }
    }
}

/// Quadrant explanation of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantImage {
    pub kind: ImageKind,
    pub index: usize,
    /// Signal patches, row-major over the patch grid.
    pub signals: Vec<usize>,
    /// Top-level quadrants holding a signal.
    pub signal_quadrants: Vec<usize>,
    pub prediction: f64,
    pub regions: Vec<RegionReport>,
    /// The structural check for its kind; always true for natural images.
    pub passed: bool,
}

impl QuadrantImage {
    pub fn phi(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.phi).collect()
    }

    pub fn selected(&self) -> Vec<bool> {
        self.regions.iter().map(|r| r.selected).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrtQuadrant {
    pub quadrant: usize,
    pub accuracy: f64,
    pub masked_accuracy: f64,
    pub p: f64,
    pub rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantResult {
    pub validation_accuracy: f64,
    /// Output of the thresholded model on the fully masked image.
    pub reference_output: f64,
    pub one_signal: Vec<QuadrantImage>,
    pub two_signal: Vec<QuadrantImage>,
    pub comparison: Vec<QuadrantImage>,
    /// Share of one-signal images whose signal quadrant has `phi >= 0.9` and
    /// all p-values 0.
    pub one_signal_pass_rate: f64,
    /// Share of two-signal images whose signal quadrants have
    /// `phi` in `[0.35, 0.65]` and an unrejected global null.
    pub two_signal_pass_rate: f64,
    pub hrt: Vec<HrtQuadrant>,
    pub shaplit_scores: RetrievalScores,
    pub hrt_scores: RetrievalScores,
}

impl QuadrantResult {
    pub fn regions_csv(&self) -> String {
        let images = self
            .one_signal
            .iter()
            .chain(&self.two_signal)
            .chain(&self.comparison);
        let rows = images.flat_map(|img| {
            img.regions
                .iter()
                .flat_map(|r| r.flatten())
                .map(|r| {
                    let top = r
                        .region
                        .id
                        .split('.')
                        .next()
                        .and_then(|q| q.parse::<usize>().ok());
                    vec![
                        img.kind.name().to_string(),
                        img.index.to_string(),
                        r.region.id.clone(),
                        r.depth.to_string(),
                        r.region.row.to_string(),
                        r.region.col.to_string(),
                        r.region.height.to_string(),
                        r.phi.to_string(),
                        r.p_global.to_string(),
                        r.rejected.to_string(),
                        r.selected.to_string(),
                        top.is_some_and(|q| img.signal_quadrants.contains(&q))
                            .to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        });
        csv_text(
            &[
                "kind",
                "image",
                "region",
                "depth",
                "row",
                "col",
                "side",
                "phi",
                "p_global",
                "rejected",
                "selected",
                "signal_quadrant",
            ],
            rows,
        )
    }
}

fn patch_region(geometry: PatchGeometry, p: usize) -> Region {
    let d = geometry.d;
    Region {
        id: format!("patch{p}"),
        row: (p / geometry.s) * d,
        col: (p % geometry.s) * d,
        height: d,
        width: d,
    }
}

fn quadrant_of(geometry: PatchGeometry, p: usize) -> usize {
    let row = (p / geometry.s) * geometry.d;
    let col = (p % geometry.s) * geometry.d;
    usize::from(row >= geometry.height() / 2) * 2 + usize::from(col >= geometry.width() / 2)
}

fn quadrants(geometry: PatchGeometry) -> [Region; 4] {
    Region::image(geometry.height(), geometry.width())
        .quadrants(1)
        .expect("even patch grid")
}

/// Column means of the training images, accumulated in fixed chunks.
fn training_mean(source: &GeneratorSource) -> Vec<f64> {
    const CHUNK: usize = 4096;
    let dim = source.dim();
    let parts: Vec<Vec<f64>> = (0..source.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; dim];
            let mut row = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(source.len()) {
                source.fill(i, &mut row);
                sum.iter_mut().zip(&row).for_each(|(s, v)| *s += v);
            }
            sum
        })
        .collect();
    let mut total = vec![0.0; dim];
    for p in parts {
        total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
    }
    total.into_iter().map(|t| t / source.len() as f64).collect()
}

struct Setup<'a> {
    cfg: &'a QuadrantConfig,
    geometry: PatchGeometry,
    predictor: Arc<dyn Predictor>,
    sampler: Arc<dyn ConditionalSampler>,
    hierarchy: HierarchyConfig,
}

impl Setup<'_> {
    fn explain(
        &self,
        kind: ImageKind,
        index: usize,
        x: &[f64],
        signals: Vec<usize>,
    ) -> Result<QuadrantImage> {
        let g = self.geometry;
        let mut hierarchy = self.hierarchy.clone();
        hierarchy.summands.seed =
            derive_seed(self.cfg.seed, &[stage::TESTS, kind as u64, index as u64]);
        let regions = hierarchical_explain(
            self.predictor.as_ref(),
            x,
            g.height(),
            g.width(),
            self.sampler.clone(),
            &hierarchy,
        )?;
        let mut signal_quadrants: Vec<usize> = signals.iter().map(|&p| quadrant_of(g, p)).collect();
        signal_quadrants.sort_unstable();
        signal_quadrants.dedup();
        let passed = match kind {
            ImageKind::OneSignal => signal_quadrants.iter().all(|&q| {
                let r = &regions[q];
                r.phi >= 0.9 && r.records.iter().all(|rec| rec.p == 0.0)
            }),
            ImageKind::TwoSignal => signal_quadrants.iter().all(|&q| {
                let r = &regions[q];
                (0.35..=0.65).contains(&r.phi) && !r.rejected
            }),
            ImageKind::Natural => true,
        };
        Ok(QuadrantImage {
            kind,
            index,
            signals,
            signal_quadrants,
            prediction: self.predictor.predict(x)?,
            regions,
            passed,
        })
    }
}

/// Hierarchical quadrant explanations on synthetic patch images with a
/// thresholded CNN and mean imputation, plus a SHAPLIT against HRT
/// comparison on quadrant retrieval.
pub fn run_quadrant(cfg: &QuadrantConfig) -> Result<QuadrantResult> {
    if !cfg.r.is_multiple_of(2) || !cfg.s.is_multiple_of(2) {
        return Err(domain(
            "the patch grid needs even sides to split into quadrants",
        ));
    }
    if cfg.train_samples == 0
        || cfg.validation_samples == 0
        || cfg.one_signal_images == 0
        || cfg.two_signal_images == 0
    {
        return Err(domain("image counts must be at least 1"));
    }
    let geometry = PatchGeometry::new(cfg.d, cfg.r, cfg.s)?;
    let generator = PatchGenerator::new(geometry, cfg.resolved_sigma2())?;
    let generator = PatchGenerator::with_params(
        geometry,
        generator.x0.clone(),
        cfg.resolved_sigma2(),
        cfg.resolved_eta(),
    )?;

    let source = GeneratorSource {
        generator: generator.clone(),
        seed: derive_seed(cfg.seed, &[stage::TRAIN]),
        count: cfg.train_samples,
    };
    let mut cnn = make_cnn(geometry, derive_seed(cfg.seed, &[stage::INIT]));
    let tc = TrainConfig {
        epochs: cfg.epochs,
        ..TrainConfig::adam(derive_seed(cfg.seed, &[stage::TRAIN, 1]))
    };
    train(&mut cnn, &source, &tc)?;
    let predictor: Arc<dyn Predictor> = Arc::new(threshold01(Arc::new(cnn), 0.5));
    let validation = GeneratorSource {
        generator: generator.clone(),
        seed: derive_seed(cfg.seed, &[stage::VALIDATION]),
        count: cfg.validation_samples,
    };
    let validation_accuracy = accuracy(predictor.as_ref(), &validation)?;
    if validation_accuracy < cfg.accuracy_floor {
        return Err(Error::Precondition(format!(
            "validation accuracy {validation_accuracy:.4} is below the floor {}",
            cfg.accuracy_floor
        )));
    }

    let imputation = make_mean_imputation(training_mean(&source));
    let reference_output = predictor.predict(imputation.reference())?;
    let sampler: Arc<dyn ConditionalSampler> = Arc::new(imputation);
    let setup = Setup {
        cfg,
        geometry,
        predictor: predictor.clone(),
        sampler: sampler.clone(),
        hierarchy: HierarchyConfig {
            depth: cfg.depth,
            rule: cfg.rule,
            min_side: cfg.d,
            summands: SummandConfig {
                k: 1,
                l: 1,
                m: 1,
                alpha: cfg.alpha,
                seed: 0,
            },
        },
    };

    let n_patches = geometry.patches();
    let placement = derive_seed(cfg.seed, &[stage::PLACEMENT]);
    let one_signal = (0..cfg.one_signal_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(placement, &[1, i as u64]);
            let p = rng.random_range(0..n_patches);
            let g = generator.clone().with_forced_signals(vec![p])?;
            let (s, sig) = g.sample_at(derive_seed(cfg.seed, &[stage::SAMPLES, 1]), i as u64);
            setup.explain(ImageKind::OneSignal, i, &s.values, sig)
        })
        .collect::<Result<Vec<_>>>()?;
    let two_signal = (0..cfg.two_signal_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(placement, &[2, i as u64]);
            let a = rng.random_range(0..n_patches);
            let b = loop {
                let b = rng.random_range(0..n_patches);
                if quadrant_of(geometry, b) != quadrant_of(geometry, a) {
                    break b;
                }
            };
            let g = generator
                .clone()
                .with_forced_signals(vec![a.min(b), a.max(b)])?;
            let (s, sig) = g.sample_at(derive_seed(cfg.seed, &[stage::SAMPLES, 2]), i as u64);
            setup.explain(ImageKind::TwoSignal, i, &s.values, sig)
        })
        .collect::<Result<Vec<_>>>()?;

    // natural images the model calls positive, whose signals each fit a quadrant
    let quads = quadrants(geometry);
    let natural_seed = derive_seed(cfg.seed, &[stage::SAMPLES, 3]);
    let mut picked = Vec::new();
    for i in 0..cfg.comparison_budget {
        if picked.len() == cfg.comparison_images {
            break;
        }
        let (s, sig) = generator.sample_at(natural_seed, i as u64);
        let signal_regions: Vec<Region> = sig.iter().map(|&p| patch_region(geometry, p)).collect();
        let Some(truth) = region_truth(&quads, &signal_regions) else {
            continue;
        };
        if predictor.predict(&s.values)? == 1.0 {
            picked.push((i, s.values, sig, truth));
        }
    }
    if picked.len() < cfg.comparison_images {
        return Err(Error::Generation(format!(
            "found {} of {} predicted-positive images within {} draws",
            picked.len(),
            cfg.comparison_images,
            cfg.comparison_budget
        )));
    }
    let comparison = picked
        .par_iter()
        .map(|(i, x, sig, _)| setup.explain(ImageKind::Natural, *i, x, sig.clone()))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Vec<bool>> = picked.iter().map(|p| p.3.clone()).collect();
    let shaplit_selected: Vec<Vec<bool>> = comparison.iter().map(QuadrantImage::selected).collect();
    let shaplit_scores = precision_f1(&shaplit_selected, &truth)?;

    // HRT is a population test: one decision per quadrant, shared by all images
    let partition = Partition::new(
        geometry.dim(),
        quads.iter().map(|q| q.pixels(geometry.width())).collect(),
    )?;
    let masker = Masker::new(sampler, partition)?;
    let dim = geometry.dim();
    let mut rows = vec![0.0; cfg.validation_samples * dim];
    let labels: Vec<f64> = rows
        .chunks_exact_mut(dim)
        .enumerate()
        .map(|(i, r)| validation.fill(i, r))
        .collect();
    let hrt_results = (0..4)
        .map(|q| {
            let out = hrt(
                predictor.as_ref(),
                &rows,
                &labels,
                q,
                &masker,
                1,
                derive_seed(cfg.seed, &[stage::CASES, q as u64]),
            )?;
            Ok(HrtQuadrant {
                quadrant: q,
                accuracy: out.t,
                masked_accuracy: out.null_stats[0],
                p: out.p_hat,
                rejected: out.p_hat <= cfg.alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hrt_flags: Vec<bool> = hrt_results.iter().map(|h| h.rejected).collect();
    let hrt_selected = vec![hrt_flags; truth.len()];
    let hrt_scores = precision_f1(&hrt_selected, &truth)?;

    let rate = |imgs: &[QuadrantImage]| {
        imgs.iter().filter(|i| i.passed).count() as f64 / imgs.len() as f64
    };
    Ok(QuadrantResult {
        validation_accuracy,
        reference_output,
        one_signal_pass_rate: rate(&one_signal),
        two_signal_pass_rate: rate(&two_signal),
        one_signal,
        two_signal,
        comparison,
        hrt: hrt_results,
        shaplit_scores,
        hrt_scores,
    })
}
