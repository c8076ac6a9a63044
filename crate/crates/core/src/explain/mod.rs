//! Feature and group explanations with per-coalition test bookkeeping.
//!
//! A player is a group of coordinates (see [`Partition`]). For each player
//! `j` and each coalition `C` of the other players this module records the
//! Shapley weight, the estimated summand `gamma_{j,C}`, the SHAPLIT p-value
//! and the bound `1 - gamma`; `phi_j` is the weighted sum of the recorded
//! summands.

mod region;
mod scoring;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use region::{hierarchical_explain, HierarchyConfig, Region, RegionReport, SelectionRule};
pub use scoring::{containment, percentile_select, precision_f1, region_truth, RetrievalScores};

use crate::bounds::{global_test, p_hat_standard_error, BoundRecord, GlobalTest};
use crate::error::{domain, Result};
use crate::games::{shapley_weight, Coalition, CooperativeGame, MAX_EXACT_PLAYERS};
use crate::masking::{Masker, Partition};
use crate::predictors::Predictor;
use crate::rng::{derive_seed, stream, tag};
use crate::testing::{
    paired_predictions, shaplit, GammaEstimate, PValueMode, ShaplitConfig, TestStatistic,
};

/// The model-based game `v(C) = E[f(X~_C)]`, estimated from `draws` masked
/// vectors per coalition (one when masking is deterministic).
#[derive(Debug)]
pub struct ModelGame<'a> {
    predictor: &'a dyn Predictor,
    x: &'a [f64],
    masker: &'a Masker,
    draws: usize,
    seed: u64,
}

pub fn group_game<'a>(
    predictor: &'a dyn Predictor,
    x: &'a [f64],
    masker: &'a Masker,
    draws: usize,
    seed: u64,
) -> Result<ModelGame<'a>> {
    if predictor.dim() != masker.dim() || x.len() != masker.dim() {
        return Err(domain("predictor, sample and sampler dimensions differ"));
    }
    if draws == 0 {
        return Err(domain("draw count must be at least 1"));
    }
    let draws = if masker.is_deterministic() { 1 } else { draws };
    Ok(ModelGame {
        predictor,
        x,
        masker,
        draws,
        seed,
    })
}

impl CooperativeGame for ModelGame<'_> {
    fn players(&self) -> usize {
        self.masker.players()
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        let mut rng = stream(self.seed, &[tag::GAME_VALUE, coalition.bits()]);
        let completion = self.masker.condition(self.x, coalition)?;
        let dim = self.x.len();
        let mut rows = vec![0.0; self.draws * dim];
        rows.chunks_exact_mut(dim)
            .for_each(|r| completion.fill(&mut rng, r));
        let preds = self.predictor.predict_batch(&rows)?;
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }
}

/// Monte Carlo sizes and levels for per-coalition records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummandConfig {
    /// Null batches per SHAPLIT test.
    pub k: usize,
    /// Draws per batch.
    pub l: usize,
    /// Paired draws per gamma estimate.
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SummandConfig {
    /// Deterministic masking needs a single null batch and a single pair.
    fn effective(&self, masker: &Masker) -> SummandConfig {
        if masker.is_deterministic() {
            SummandConfig {
                k: 1,
                l: 1,
                m: 1,
                ..*self
            }
        } else {
            *self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: usize,
    /// `sum_C w_C gamma_hat_{j,C}` over the records below.
    pub phi: f64,
    pub records: Vec<BoundRecord>,
    pub global: GlobalTest,
    pub p_mode: PValueMode,
}

impl FeatureReport {
    pub fn recompute_phi(&self) -> f64 {
        self.records.iter().map(|r| r.weight * r.gamma).sum()
    }

    pub fn all_within_bound(&self) -> bool {
        self.records.iter().all(|r| r.within_bound)
    }
}

/// Seed of the tests for player `j` and coalition `c`.
pub fn summand_seed(seed: u64, j: usize, c: Coalition) -> u64 {
    derive_seed(seed, &[j as u64, c.bits()])
}

/// Every Shapley summand of player `j` with its SHAPLIT test.
pub fn explain_feature(
    predictor: &dyn Predictor,
    x: &[f64],
    masker: &Masker,
    j: usize,
    cfg: &SummandConfig,
) -> Result<FeatureReport> {
    let n = masker.players();
    if n > MAX_EXACT_PLAYERS {
        return Err(crate::Error::Capacity {
            players: n,
            limit: MAX_EXACT_PLAYERS,
            hint: "group features with a partition and use the hierarchical explanation",
        });
    }
    if j >= n {
        return Err(domain(format!("player {j} outside 0..{n}")));
    }
    let cfg = cfg.effective(masker);
    let coalitions: Vec<Coalition> = Coalition::excluding(n, j)?.collect();
    let records = coalitions
        .par_iter()
        .map(|&c| {
            let seed = summand_seed(cfg.seed, j, c);
            let (with, without) = paired_predictions(predictor, x, j, c, masker, cfg.m, seed)?;
            let diffs: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
            let gamma = GammaEstimate::from_differences(&diffs);
            let test_cfg = ShaplitConfig {
                k: cfg.k,
                l: cfg.l,
                statistic: TestStatistic::for_draws(cfg.l),
                seed,
            };
            let outcome = shaplit(predictor, x, j, c, masker, &test_cfg)?;
            let weight = shapley_weight(n, c.len())?;
            let p_se = match outcome.mode {
                PValueMode::Indicator => 0.0,
                PValueMode::Randomized => {
                    let draws = with
                        .chunks_exact(cfg.l)
                        .map(|b| test_cfg.statistic.apply(b))
                        .collect::<Result<Vec<f64>>>()?;
                    p_hat_standard_error(outcome.p_hat, &outcome.null_stats, &draws)
                }
            };
            let rec = BoundRecord::new(
                c,
                weight,
                gamma.gamma_hat,
                gamma.std_error,
                outcome.p_hat,
                p_se,
            )?;
            Ok((rec, outcome.mode))
        })
        .collect::<Result<Vec<_>>>()?;
    let p_mode = records.first().map_or(PValueMode::Randomized, |r| r.1);
    let records: Vec<BoundRecord> = records.into_iter().map(|r| r.0).collect();
    let phi = records.iter().map(|r| r.weight * r.gamma).sum();
    let triples: Vec<_> = records
        .iter()
        .map(|r| (r.coalition, r.weight, r.p))
        .collect();
    let global = global_test(j, phi, &triples, cfg.alpha)?;
    Ok(FeatureReport {
        feature: j,
        phi,
        records,
        global,
        p_mode,
    })
}

/// [`explain_feature`] for several players, in the given order.
pub fn explain_players(
    predictor: &dyn Predictor,
    x: &[f64],
    masker: &Masker,
    players: &[usize],
    cfg: &SummandConfig,
) -> Result<Vec<FeatureReport>> {
    players
        .par_iter()
        .map(|&j| explain_feature(predictor, x, masker, j, cfg))
        .collect()
}

/// Partition of an image region into its pixel groups.
pub(crate) fn region_partition(
    dim: usize,
    image_width: usize,
    regions: &[Region],
) -> Result<Partition> {
    Partition::new(dim, regions.iter().map(|r| r.pixels(image_width)).collect())
}

#[cfg(test)]
mod tests;
