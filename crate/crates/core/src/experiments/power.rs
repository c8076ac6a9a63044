use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_text, stage};
use crate::bounds::{pairwise_p_limit, BoundRecord};
use crate::error::{domain, Result};
use crate::games::{shapley_weight, Coalition};
use crate::masking::{Masker, PatchGenerator, PatchGeometry, PatchMasking, PatchSampler};
use crate::predictors::{
    make_cnn, make_fcn, train, GeneratorSource, Predictor, SampleSource, TrainConfig,
    DEFAULT_HIDDEN,
};
use crate::rng::derive_seed;
use crate::testing::{paired_predictions, GammaEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    Fcn,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Fcn => "fcn",
        }
    }
}

fn default_d() -> usize {
    7
}
fn default_grid_side() -> usize {
    2
}
fn default_m_grid() -> Vec<usize> {
    vec![1_000, 10_000, 100_000]
}
fn default_sweep_m() -> usize {
    320_000
}
fn default_test_samples() -> usize {
    320
}
fn default_validation() -> usize {
    2_000
}
fn default_seeds() -> usize {
    5
}
fn default_draws() -> usize {
    1_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Cnn, ModelKind::Fcn]
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_epochs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub seed: u64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_grid_side")]
    pub r: usize,
    #[serde(default = "default_grid_side")]
    pub s: usize,
    /// Training set sizes for the sweep at the training noise level.
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    /// Training noise; `1/d^2` when absent.
    #[serde(default)]
    pub train_sigma2: Option<f64>,
    /// Test noise levels; `1/d^4, 1/d^2, 1/d` when absent.
    #[serde(default)]
    pub sigma2_grid: Option<Vec<f64>>,
    /// Training set size for the noise sweep.
    #[serde(default = "default_sweep_m")]
    pub sweep_m: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_validation")]
    pub validation_samples: usize,
    /// Independent repetitions (fresh data, initialization and draws).
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Paired draws per gamma estimate.
    #[serde(default = "default_draws")]
    pub gamma_draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl PowerConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults are complete")
    }

    pub fn resolved_train_sigma2(&self) -> f64 {
        self.train_sigma2.unwrap_or(1.0 / (self.d * self.d) as f64)
    }

    pub fn resolved_sigma2_grid(&self) -> Vec<f64> {
        self.sigma2_grid.clone().unwrap_or_else(|| {
            let d = self.d as f64;
            vec![d.powi(-4), d.powi(-2), d.powi(-1)]
        })
    }

    fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty()
            || self.resolved_sigma2_grid().is_empty()
            || self.models.is_empty()
        {
            return Err(domain("power study grids must be non-empty"));
        }
        let counts = [
            self.sweep_m,
            self.test_samples,
            self.validation_samples,
            self.seeds,
            self.gamma_draws,
        ];
        if counts.contains(&0) || self.m_grid.contains(&0) {
            return Err(domain("power study counts must be at least 1"));
        }
        if self.r * self.s > 24 {
            return Err(domain("at most 24 patches are supported"));
        }
        Ok(())
    }
}

/// Power of one trained model at one test noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub model: ModelKind,
    pub repetition: usize,
    pub m: usize,
    pub train_sigma2: f64,
    pub test_sigma2: f64,
    pub validation_accuracy: f64,
    /// Signal-patch / noise-coalition pairs evaluated.
    pub cases: usize,
    pub rejections: usize,
    pub power: f64,
    /// Every `(p_hat, gamma_hat)` pair met the soft bound.
    pub within_bound: bool,
    /// Smallest `1 - gamma + slack - p` over the cases.
    pub min_margin: f64,
    pub final_loss: f64,
}

/// Power averaged over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub model: ModelKind,
    /// `m` or `sigma2`.
    pub sweep: String,
    pub m: usize,
    pub test_sigma2: f64,
    pub mean: f64,
    /// Standard error of the mean across repetitions.
    pub std_error: f64,
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub model: ModelKind,
    pub non_decreasing_in_m: bool,
    pub non_increasing_in_sigma2: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub cells: Vec<PowerCell>,
    pub points: Vec<PowerPoint>,
    pub monotonicity: Vec<Monotonicity>,
    pub all_within_bound: bool,
    /// The `m` grid is a desk-scale stand-in.
    pub m_grid_note: String,
}

impl PowerResult {
    pub fn power_csv(&self) -> String {
        csv_text(
            &[
                "model",
                "sweep",
                "m",
                "sigma2",
                "power",
                "std_error",
                "repetitions",
            ],
            self.points.iter().map(|p| {
                vec![
                    p.model.name().to_string(),
                    p.sweep.clone(),
                    p.m.to_string(),
                    p.test_sigma2.to_string(),
                    p.mean.to_string(),
                    p.std_error.to_string(),
                    p.repetitions.to_string(),
                ]
            }),
        )
    }

    pub fn sweep(&self, model: ModelKind, sweep: &str) -> Vec<&PowerPoint> {
        self.points
            .iter()
            .filter(|p| p.model == model && p.sweep == sweep)
            .collect()
    }
}

/// Whether `(mean, std_error)` pairs, in sweep order, are non-decreasing
/// (or non-increasing) up to 95% bands: every later point may fall below
/// (above) an earlier one by at most `1.96` combined standard errors.
pub fn monotone_within_bands(points: &[(f64, f64)], non_decreasing: bool) -> bool {
    points.iter().enumerate().all(|(i, &(a, sa))| {
        points[i + 1..].iter().all(|&(b, sb)| {
            let band = 1.96 * (sa * sa + sb * sb).sqrt();
            if non_decreasing {
                b >= a - band
            } else {
                b <= a + band
            }
        })
    })
}

#[derive(Debug)]
struct Trained {
    model: ModelKind,
    m: usize,
    predictor: Arc<dyn Predictor>,
    validation_accuracy: f64,
    final_loss: f64,
}

fn train_model(
    cfg: &PowerConfig,
    geometry: PatchGeometry,
    generator: &PatchGenerator,
    rep: usize,
    model: ModelKind,
    m: usize,
) -> Result<Trained> {
    let rep = rep as u64;
    // every model and size of a repetition sees prefixes of one data stream
    let source = GeneratorSource {
        generator: generator.clone(),
        seed: derive_seed(cfg.seed, &[stage::TRAIN, rep]),
        count: m,
    };
    let init = derive_seed(cfg.seed, &[stage::INIT, rep, model as u64]);
    let shuffle = derive_seed(init, &[m as u64]);
    let (predictor, report): (Arc<dyn Predictor>, _) = match model {
        ModelKind::Cnn => {
            let mut net = make_cnn(geometry, init);
            let tc = TrainConfig {
                epochs: cfg.epochs,
                ..TrainConfig::adam(shuffle)
            };
            let report = train(&mut net, &source, &tc)?;
            (Arc::new(net), report)
        }
        ModelKind::Fcn => {
            let mut net = make_fcn(geometry.dim(), cfg.hidden, init)?;
            let tc = TrainConfig {
                epochs: cfg.epochs,
                ..TrainConfig::sgd(shuffle)
            };
            let report = train(&mut net, &source, &tc)?;
            (Arc::new(net), report)
        }
    };
    let validation = GeneratorSource {
        generator: generator.clone(),
        seed: derive_seed(cfg.seed, &[stage::VALIDATION, rep]),
        count: cfg.validation_samples,
    };
    let validation_accuracy = accuracy(predictor.as_ref(), &validation)?;
    Ok(Trained {
        model,
        m,
        predictor,
        validation_accuracy,
        final_loss: *report.loss_trace.last().unwrap_or(&f64::NAN),
    })
}

pub(crate) fn accuracy(predictor: &dyn Predictor, source: &dyn SampleSource) -> Result<f64> {
    let dim = source.dim();
    let mut rows = vec![0.0; source.len() * dim];
    let labels: Vec<f64> = rows
        .chunks_exact_mut(dim)
        .enumerate()
        .map(|(i, r)| source.fill(i, r))
        .collect();
    let preds = predictor.predict_batch(&rows)?;
    let correct = preds
        .iter()
        .zip(&labels)
        .filter(|(p, y)| f64::from(u8::from(**p >= 0.5)) == **y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// One signal patch `j` of a positive test image with a coalition of its
/// noise patches.
struct Case {
    image: usize,
    j: usize,
    c: Coalition,
}

struct CaseOutcome {
    rejected: bool,
    record: BoundRecord,
}

fn evaluate_cell(
    cfg: &PowerConfig,
    trained: &Trained,
    test_gen: &PatchGenerator,
    images: &[Vec<f64>],
    cases: &[Case],
    rep: usize,
) -> Result<(usize, bool, f64)> {
    let geometry = test_gen.geometry;
    let sampler = PatchSampler::from_generator(test_gen, PatchMasking::Unimportant);
    let masker = Masker::new(Arc::new(sampler), geometry.patch_partition()?)?;
    let n = geometry.patches();
    let outcomes = cases
        .par_iter()
        .map(|case| {
            // draws are shared by every model and training size
            let seed = derive_seed(
                cfg.seed,
                &[
                    stage::CASES,
                    rep as u64,
                    case.image as u64,
                    case.j as u64,
                    case.c.bits(),
                ],
            );
            let x = &images[case.image];
            let (with, without) = paired_predictions(
                trained.predictor.as_ref(),
                x,
                case.j,
                case.c,
                &masker,
                cfg.gamma_draws,
                seed,
            )?;
            let diffs: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
            let gamma = GammaEstimate::from_differences(&diffs);
            // the bound concerns P[Gamma <= 0], the SHAPLIT p-value averaged
            // over the test statistic
            let (p, p_se) = pairwise_p_limit(&with, &without);
            let record = BoundRecord::new(
                case.c,
                shapley_weight(n, case.c.len())?,
                gamma.gamma_hat,
                gamma.std_error,
                p,
                p_se,
            )?;
            Ok(CaseOutcome {
                rejected: 1.0 - gamma.gamma_hat <= cfg.alpha,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rejections = outcomes.iter().filter(|o| o.rejected).count();
    let within = outcomes.iter().all(|o| o.record.within_bound);
    let margin = outcomes
        .iter()
        .map(|o| o.record.bound + o.record.slack - o.record.p)
        .fold(f64::INFINITY, f64::min);
    Ok((rejections, within, margin))
}

fn build_cases(geometry: PatchGeometry, signals: &[Vec<usize>]) -> Result<Vec<Case>> {
    let n = geometry.patches();
    let mut cases = Vec::new();
    for (image, sig) in signals.iter().enumerate() {
        let noise = Coalition::from_members(n, (0..n).filter(|p| !sig.contains(p)))?;
        for &j in sig {
            for c in Coalition::excluding(n, j)? {
                if c.is_subset_of(noise) {
                    cases.push(Case { image, j, c });
                }
            }
        }
    }
    Ok(cases)
}

/// Power of `1 - gamma_hat <= alpha` on signal patches whose coalition holds
/// only noise patches, swept over training size and test noise.
pub fn run_power_study(cfg: &PowerConfig) -> Result<PowerResult> {
    cfg.validate()?;
    let geometry = PatchGeometry::new(cfg.d, cfg.r, cfg.s)?;
    let train_sigma2 = cfg.resolved_train_sigma2();
    let train_gen = PatchGenerator::new(geometry, train_sigma2)?;
    let sigma_grid = cfg.resolved_sigma2_grid();

    let mut sizes = cfg.m_grid.clone();
    if !sizes.contains(&cfg.sweep_m) {
        sizes.push(cfg.sweep_m);
    }

    let mut cells = Vec::new();
    for rep in 0..cfg.seeds {
        let jobs: Vec<(ModelKind, usize)> = cfg
            .models
            .iter()
            .flat_map(|&k| sizes.iter().map(move |&m| (k, m)))
            .collect();
        let trained = jobs
            .par_iter()
            .map(|&(k, m)| train_model(cfg, geometry, &train_gen, rep, k, m))
            .collect::<Result<Vec<_>>>()?;

        let mut levels = sigma_grid.clone();
        if !levels.contains(&train_sigma2) {
            levels.push(train_sigma2);
        }
        for &sigma2 in &levels {
            // the same placements and noise stream at every level
            let test_gen = train_gen.clone().with_sigma2(sigma2)?;
            let test_seed = derive_seed(cfg.seed, &[stage::TEST_SET, rep as u64]);
            let (images, signals): (Vec<Vec<f64>>, Vec<Vec<usize>>) = (0..cfg.test_samples as u64)
                .map(|i| {
                    let (s, sig) = test_gen.sample_at(test_seed, i);
                    (s.values, sig)
                })
                .unzip();
            let cases = build_cases(geometry, &signals)?;
            for t in &trained {
                let in_m_sweep = sigma2 == train_sigma2 && cfg.m_grid.contains(&t.m);
                let in_sigma_sweep = t.m == cfg.sweep_m && sigma_grid.contains(&sigma2);
                if !in_m_sweep && !in_sigma_sweep {
                    continue;
                }
                let (rejections, within_bound, min_margin) =
                    evaluate_cell(cfg, t, &test_gen, &images, &cases, rep)?;
                cells.push(PowerCell {
                    model: t.model,
                    repetition: rep,
                    m: t.m,
                    train_sigma2,
                    test_sigma2: sigma2,
                    validation_accuracy: t.validation_accuracy,
                    cases: cases.len(),
                    rejections,
                    power: if cases.is_empty() {
                        0.0
                    } else {
                        rejections as f64 / cases.len() as f64
                    },
                    within_bound,
                    min_margin,
                    final_loss: t.final_loss,
                });
            }
        }
    }

    let mut points = Vec::new();
    let mut monotonicity = Vec::new();
    for &model in &cfg.models {
        let m_points: Vec<PowerPoint> = cfg
            .m_grid
            .iter()
            .map(|&m| aggregate(&cells, model, "m", m, train_sigma2))
            .collect();
        let s_points: Vec<PowerPoint> = sigma_grid
            .iter()
            .map(|&s| aggregate(&cells, model, "sigma2", cfg.sweep_m, s))
            .collect();
        // sweeps are checked in increasing order of their variable
        let mut by_m: Vec<&PowerPoint> = m_points.iter().collect();
        by_m.sort_by_key(|p| p.m);
        let mut by_s: Vec<&PowerPoint> = s_points.iter().collect();
        by_s.sort_by(|a, b| a.test_sigma2.total_cmp(&b.test_sigma2));
        let bands =
            |ps: &[&PowerPoint]| ps.iter().map(|p| (p.mean, p.std_error)).collect::<Vec<_>>();
        monotonicity.push(Monotonicity {
            model,
            non_decreasing_in_m: monotone_within_bands(&bands(&by_m), true),
            non_increasing_in_sigma2: monotone_within_bands(&bands(&by_s), false),
        });
        points.extend(m_points);
        points.extend(s_points);
    }
    Ok(PowerResult {
        all_within_bound: cells.iter().all(|c| c.within_bound),
        cells,
        points,
        monotonicity,
        m_grid_note: "desk-scale m grid".to_string(),
    })
}

fn aggregate(
    cells: &[PowerCell],
    model: ModelKind,
    sweep: &str,
    m: usize,
    sigma2: f64,
) -> PowerPoint {
    let powers: Vec<f64> = cells
        .iter()
        .filter(|c| c.model == model && c.m == m && c.test_sigma2 == sigma2)
        .map(|c| c.power)
        .collect();
    let n = powers.len() as f64;
    let mean = powers.iter().sum::<f64>() / n;
    let std_error = if powers.len() > 1 {
        (powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    PowerPoint {
        model,
        sweep: sweep.to_string(),
        m,
        test_sigma2: sigma2,
        mean,
        std_error,
        repetitions: powers.len(),
    }
}
