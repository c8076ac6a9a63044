//! Randomization tests: SHAPLIT, the conditional randomization test (CRT)
//! and its holdout variant (HRT), plus Monte Carlo estimates of the Shapley
//! summand `gamma = E[f(X~_{C+j}) - f(X~_C)]` and of `P[Gamma <= 0]`.
//!
//! Every p-value is one-sided, `(1 + #{t~ >= t}) / (K + 1)`: ties count
//! toward the null.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::games::Coalition;
use crate::masking::{ConditionalSampler, Masker};
use crate::predictors::Predictor;
use crate::rng::{stream, tag};

/// Null batches evaluated per predictor call.
const NULL_CHUNK: usize = 256;
/// Pairs per stream in [`estimate_gamma`].
const GAMMA_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestStatistic {
    /// The single prediction (L = 1).
    Identity,
    /// Mean prediction over the L draws.
    Mean,
    /// `1 - identity`.
    FlipIdentity,
    /// `1 - mean`.
    FlipMean,
    /// Holdout 0-1 error of a fixed predictor (HRT).
    Holdout01Error,
}

impl TestStatistic {
    /// Identity for `L = 1`, the mean otherwise.
    pub fn for_draws(l: usize) -> Self {
        if l == 1 {
            TestStatistic::Identity
        } else {
            TestStatistic::Mean
        }
    }

    /// The statistic of the opposite prediction, `1 - T`.
    pub fn flip(self) -> Result<Self> {
        use TestStatistic::*;
        match self {
            Identity => Ok(FlipIdentity),
            Mean => Ok(FlipMean),
            FlipIdentity => Ok(Identity),
            FlipMean => Ok(Mean),
            Holdout01Error => Err(Error::Unsupported(
                "the holdout 0-1 error statistic cannot be flipped".into(),
            )),
        }
    }

    pub fn is_flipped(self) -> bool {
        matches!(self, TestStatistic::FlipIdentity | TestStatistic::FlipMean)
    }

    /// Applies the statistic to the predictions of one batch of L draws.
    pub fn apply(self, predictions: &[f64]) -> Result<f64> {
        use TestStatistic::*;
        let mean = || predictions.iter().sum::<f64>() / predictions.len() as f64;
        match self {
            Identity | FlipIdentity if predictions.len() != 1 => Err(domain(format!(
                "the identity statistic needs L = 1, got {} draws",
                predictions.len()
            ))),
            Identity => Ok(predictions[0]),
            FlipIdentity => Ok(1.0 - predictions[0]),
            Mean => Ok(mean()),
            FlipMean => Ok(1.0 - mean()),
            Holdout01Error => Err(Error::Unsupported(
                "the holdout 0-1 error needs labels; use hrt".into(),
            )),
        }
    }
}

/// How `p_hat` was formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMode {
    /// `(1 + #{t~ >= t}) / (K + 1)`.
    Randomized,
    /// Deterministic masking with K = 1: `1[t~ >= t]`.
    Indicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: TestStatistic,
    pub t: f64,
    pub null_stats: Vec<f64>,
    pub p_hat: f64,
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub mode: PValueMode,
}

/// `(1 + #{t~ >= t}) / (K + 1)`.
pub fn p_value(t: f64, null_stats: &[f64]) -> f64 {
    let exceed = null_stats.iter().filter(|&&s| s >= t).count();
    (1 + exceed) as f64 / (null_stats.len() + 1) as f64
}

fn outcome(
    statistic: TestStatistic,
    t: f64,
    null_stats: Vec<f64>,
    l: usize,
    seed: u64,
    deterministic: bool,
) -> TestOutcome {
    let k = null_stats.len();
    let (p_hat, mode) = if deterministic && k == 1 {
        (
            f64::from(u8::from(null_stats[0] >= t)),
            PValueMode::Indicator,
        )
    } else {
        (p_value(t, &null_stats), PValueMode::Randomized)
    };
    TestOutcome {
        statistic,
        t,
        null_stats,
        p_hat,
        k,
        l,
        seed,
        mode,
    }
}

/// Monte Carlo parameters of a SHAPLIT test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShaplitConfig {
    pub k: usize,
    pub l: usize,
    pub statistic: TestStatistic,
    pub seed: u64,
}

impl ShaplitConfig {
    pub fn new(k: usize, l: usize, seed: u64) -> Self {
        ShaplitConfig {
            k,
            l,
            statistic: TestStatistic::for_draws(l),
            seed,
        }
    }
}

fn check_player(
    masker: &Masker,
    predictor: &dyn Predictor,
    x: &[f64],
    j: usize,
    c: Coalition,
) -> Result<()> {
    if predictor.dim() != masker.dim() {
        return Err(domain(format!(
            "predictor dimension {} does not match sampler dimension {}",
            predictor.dim(),
            masker.dim()
        )));
    }
    if x.len() != masker.dim() {
        return Err(domain(format!(
            "sample has length {}, expected {}",
            x.len(),
            masker.dim()
        )));
    }
    if j >= masker.players() || c.players() != masker.players() {
        return Err(domain(format!(
            "feature {j} / coalition over {} players do not fit {} players",
            c.players(),
            masker.players()
        )));
    }
    if c.contains(j) {
        return Err(domain(format!(
            "feature {j} belongs to the conditioning coalition"
        )));
    }
    Ok(())
}

/// Statistic of one batch of `l` draws masked on `coalition`, from `rng`.
fn batch_statistic(
    predictor: &dyn Predictor,
    masker: &Masker,
    x: &[f64],
    coalition: Coalition,
    cfg: &ShaplitConfig,
    stream_path: &[u64],
) -> Result<f64> {
    let completion = masker.condition(x, coalition)?;
    let mut rng = stream(cfg.seed, stream_path);
    let dim = x.len();
    let mut rows = vec![0.0; cfg.l * dim];
    for row in rows.chunks_exact_mut(dim) {
        completion.fill(&mut rng, row);
    }
    cfg.statistic.apply(&predictor.predict_batch(&rows)?)
}

/// Shapley local independence test of `f(X~_{C+j}) =d f(X~_C)`.
///
/// The test statistic uses one batch of `L` draws masked on `C + j`; null
/// batch `k` uses `L` draws masked on `C`. Every batch has its own stream, so
/// no draw is shared and the result does not depend on the thread count.
pub fn shaplit(
    predictor: &dyn Predictor,
    x: &[f64],
    j: usize,
    c: Coalition,
    masker: &Masker,
    cfg: &ShaplitConfig,
) -> Result<TestOutcome> {
    check_player(masker, predictor, x, j, c)?;
    if cfg.k == 0 || cfg.l == 0 {
        return Err(domain("K and L must be at least 1"));
    }
    if cfg.statistic == TestStatistic::Holdout01Error {
        return Err(Error::Unsupported(
            "SHAPLIT statistics act on predictions".into(),
        ));
    }
    let t = batch_statistic(predictor, masker, x, c.with(j), cfg, &[tag::TEST_BATCH])?;

    let completion = masker.condition(x, c)?;
    let dim = x.len();
    let chunks: Vec<std::ops::Range<usize>> = (0..cfg.k)
        .step_by(NULL_CHUNK)
        .map(|a| a..(a + NULL_CHUNK).min(cfg.k))
        .collect();
    let parts = chunks
        .into_par_iter()
        .map(|range| {
            let mut rows = vec![0.0; range.len() * cfg.l * dim];
            for (k, batch) in range.clone().zip(rows.chunks_exact_mut(cfg.l * dim)) {
                let mut rng = stream(cfg.seed, &[tag::NULL_BATCH, k as u64]);
                for row in batch.chunks_exact_mut(dim) {
                    completion.fill(&mut rng, row);
                }
            }
            let preds = predictor.predict_batch(&rows)?;
            preds
                .chunks_exact(cfg.l)
                .map(|p| cfg.statistic.apply(p))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let null_stats = parts.concat();
    Ok(outcome(
        cfg.statistic,
        t,
        null_stats,
        cfg.l,
        cfg.seed,
        masker.is_deterministic(),
    ))
}

/// Monte Carlo estimate of `gamma_{j,C}` and `p_{j,C} = P[Gamma <= 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma_hat: f64,
    /// Standard deviation of `Gamma` over `sqrt(M)`, with the sample padded by
    /// one pseudo-draw at each end of `[-1, 1]` so that a constant sample
    /// still reports its resolution; 0 when `M < 2`.
    pub std_error: f64,
    /// Fraction of draws with `Gamma <= 0`.
    pub p_hat_limit: f64,
    /// Fraction of draws with `Gamma >= 0`, the limit for the flipped statistic.
    pub p_hat_limit_flipped: f64,
    pub draws: usize,
}

impl GammaEstimate {
    pub fn from_differences(diffs: &[f64]) -> Self {
        let m = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / m;
        let std_error = if diffs.len() < 2 {
            0.0
        } else {
            let padded = diffs.iter().sum::<f64>() / (m + 2.0);
            let ss = diffs
                .iter()
                .chain(&[-1.0, 1.0])
                .map(|d| (d - padded).powi(2))
                .sum::<f64>();
            (ss / (m + 1.0) / m).sqrt()
        };
        GammaEstimate {
            gamma_hat: mean,
            std_error,
            p_hat_limit: diffs.iter().filter(|&&d| d <= 0.0).count() as f64 / m,
            p_hat_limit_flipped: diffs.iter().filter(|&&d| d >= 0.0).count() as f64 / m,
            draws: diffs.len(),
        }
    }
}

/// Predictions on `M` independent pairs `(X~_{C+j}, X~_C)`; the two members
/// of a pair come from separate streams. Returns the two prediction columns.
pub fn paired_predictions(
    predictor: &dyn Predictor,
    x: &[f64],
    j: usize,
    c: Coalition,
    masker: &Masker,
    draws: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_player(masker, predictor, x, j, c)?;
    if draws == 0 {
        return Err(domain("M must be at least 1"));
    }
    let with = masker.condition(x, c.with(j))?;
    let without = masker.condition(x, c)?;
    let dim = x.len();
    let chunks: Vec<(usize, usize)> = (0..draws)
        .step_by(GAMMA_CHUNK)
        .enumerate()
        .map(|(i, a)| (i, (a + GAMMA_CHUNK).min(draws) - a))
        .collect();
    let parts = chunks
        .into_par_iter()
        .map(|(i, len)| {
            let mut rows = vec![0.0; 2 * len * dim];
            let (a, b) = rows.split_at_mut(len * dim);
            let mut rng = stream(seed, &[tag::GAMMA_WITH, i as u64]);
            a.chunks_exact_mut(dim).for_each(|r| with.fill(&mut rng, r));
            let mut rng = stream(seed, &[tag::GAMMA_WITHOUT, i as u64]);
            b.chunks_exact_mut(dim)
                .for_each(|r| without.fill(&mut rng, r));
            let mut preds = predictor.predict_batch(&rows)?;
            let tail = preds.split_off(len);
            Ok((preds, tail))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = Vec::with_capacity(draws);
    let mut wo = Vec::with_capacity(draws);
    for (a, b) in parts {
        w.extend(a);
        wo.extend(b);
    }
    Ok((w, wo))
}

/// Estimate of `gamma_{j,C}` and `P[Gamma_{j,C} <= 0]` from `M` pairs.
pub fn estimate_gamma(
    predictor: &dyn Predictor,
    x: &[f64],
    j: usize,
    c: Coalition,
    masker: &Masker,
    draws: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    let (with, without) = paired_predictions(predictor, x, j, c, masker, draws, seed)?;
    let diffs: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
    Ok(GammaEstimate::from_differences(&diffs))
}

/// Statistics for the conditional randomization test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrtStatistic {
    /// `|corr(X_j, Y)|`.
    AbsCorrelation,
}

impl CrtStatistic {
    fn apply(self, column: &[f64], labels: &[f64]) -> f64 {
        match self {
            CrtStatistic::AbsCorrelation => abs_correlation(column, labels),
        }
    }
}

fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).abs()
    }
}

fn check_table(dim: usize, rows: &[f64], labels: &[f64], j: usize) -> Result<usize> {
    if dim == 0
        || rows.is_empty()
        || !rows.len().is_multiple_of(dim)
        || rows.len() / dim != labels.len()
    {
        return Err(domain("data matrix and labels do not agree"));
    }
    if j >= dim {
        return Err(domain(format!(
            "feature {j} out of range for dimension {dim}"
        )));
    }
    Ok(labels.len())
}

/// Conditional randomization test of `X_j independent of Y given X_{-j}`.
///
/// Null copy `k` redraws column `j` of every row from
/// `X_j | X_{-j} = x_{-j}` on its own stream.
pub fn crt(
    rows: &[f64],
    labels: &[f64],
    j: usize,
    sampler: &dyn ConditionalSampler,
    statistic: CrtStatistic,
    k: usize,
    seed: u64,
) -> Result<TestOutcome> {
    let dim = sampler.dim();
    let m = check_table(dim, rows, labels, j)?;
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    let column: Vec<f64> = rows.chunks_exact(dim).map(|r| r[j]).collect();
    let t = statistic.apply(&column, labels);
    let mut revealed = vec![true; dim];
    revealed[j] = false;
    let null_stats = (0..k)
        .into_par_iter()
        .map(|kk| {
            let mut rng = stream(seed, &[tag::NULL_BATCH, kk as u64]);
            let mut out = vec![0.0; dim];
            let mut col = Vec::with_capacity(m);
            for r in rows.chunks_exact(dim) {
                sampler.condition(r, &revealed)?.fill(&mut rng, &mut out);
                col.push(out[j]);
            }
            Ok(statistic.apply(&col, labels))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(outcome(
        TestStatistic::Identity,
        t,
        null_stats,
        1,
        seed,
        false,
    ))
}

fn accuracy(predictions: &[f64], labels: &[f64]) -> f64 {
    let wrong = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= 0.5) != (**y >= 0.5))
        .count();
    1.0 - wrong as f64 / labels.len() as f64
}

/// Holdout randomization test of player `j` for a fixed predictor.
///
/// Stored statistics are holdout accuracies, `1 - (0-1 error)`, so that the
/// one-sided rule `t~ >= t` counts null copies whose error did not increase.
/// A small p-value means masking `j` raises the error. Null copy `k` keeps
/// every player but `j` and redraws `j` on its own stream.
pub fn hrt(
    predictor: &dyn Predictor,
    rows: &[f64],
    labels: &[f64],
    j: usize,
    masker: &Masker,
    k: usize,
    seed: u64,
) -> Result<TestOutcome> {
    let dim = masker.dim();
    check_table(dim, rows, labels, 0)?;
    if predictor.dim() != dim {
        return Err(domain("predictor and sampler dimensions differ"));
    }
    if j >= masker.players() {
        return Err(domain(format!("player {j} out of range")));
    }
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    let t = accuracy(&predictor.predict_batch(rows)?, labels);
    let keep = Coalition::full(masker.players())?.without(j);
    let null_stats = (0..k)
        .into_par_iter()
        .map(|kk| {
            let mut rng = stream(seed, &[tag::NULL_BATCH, kk as u64]);
            let mut masked = vec![0.0; rows.len()];
            for (r, out) in rows.chunks_exact(dim).zip(masked.chunks_exact_mut(dim)) {
                masker.condition(r, keep)?.fill(&mut rng, out);
            }
            Ok(accuracy(&predictor.predict_batch(&masked)?, labels))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(outcome(
        TestStatistic::Holdout01Error,
        t,
        null_stats,
        1,
        seed,
        masker.is_deterministic(),
    ))
}
