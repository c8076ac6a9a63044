//! The bound calculus linking Shapley summands to SHAPLIT p-values:
//!
//! * per coalition, `p_{j,C} <= 1 - gamma_{j,C}`;
//! * if `phi_j >= 1 - eps` then every `gamma_{j,C} >= (w~ - eps) / w~`, where
//!   `w~` is the smallest Shapley weight;
//! * `2 * sum_C w_C p_{j,C}` is a valid p-value for the intersection of all
//!   SHAPLIT nulls of `j`, and it is at most `2 (1 - phi_j)`.

pub mod exact;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::games::{min_weight_exact, Coalition, MAX_PLAYERS};
use crate::testing::GammaEstimate;

/// `1 - gamma`, keeping the raw value and the value clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub raw: f64,
    pub reported: f64,
    /// True when the raw bound is at least 1 and says nothing.
    pub vacuous: bool,
}

pub fn bound_from_gamma(gamma: f64) -> Result<Bound> {
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(domain(format!("gamma {gamma} outside [-1, 1]")));
    }
    let raw = 1.0 - gamma;
    Ok(Bound {
        raw,
        reported: raw.clamp(0.0, 1.0),
        vacuous: raw >= 1.0,
    })
}

/// Smallest Shapley weight `1 / (n binom(n-1, floor((n-1)/2)))`.
pub fn min_weight(players: usize) -> Result<f64> {
    Ok(min_weight_exact(players)?.value())
}

/// Per-test level `eps` that keeps a family of `2^{n-1}` tests at level
/// `alpha`: `alpha w~`, or `alpha w~ / 2^{n-1}` with the Bonferroni
/// correction.
pub fn epsilon_for_level(players: usize, alpha: f64, bonferroni: bool) -> Result<f64> {
    if !(2..=MAX_PLAYERS).contains(&players) {
        return Err(domain(format!("need 2..=64 players, got {players}")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha {alpha} outside [0, 1)")));
    }
    let base = alpha * min_weight(players)?;
    Ok(if bonferroni {
        base / 2f64.powi(players as i32 - 1)
    } else {
        base
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpliedGamma {
    pub min_gamma: f64,
    /// The bound on every `p_{j,C}` implied by `min_gamma`.
    pub max_p: f64,
    /// False when `1 - phi` exceeds the smallest weight.
    pub informative: bool,
}

/// Lower bound `(w~ - eps) / w~` on every summand of `phi` with
/// `eps = 1 - phi`, valid when `phi >= 1 - budget`.
pub fn min_gamma_implied(phi: f64, budget: f64, players: usize) -> Result<ImpliedGamma> {
    if phi < 1.0 - budget {
        return Err(Error::Precondition(format!(
            "phi = {phi} is below 1 - {budget}"
        )));
    }
    let w = min_weight(players)?;
    let eps = (1.0 - phi).max(0.0);
    let min_gamma = (w - eps) / w;
    Ok(ImpliedGamma {
        min_gamma,
        max_p: (1.0 - min_gamma).clamp(0.0, 1.0),
        informative: min_gamma >= 0.0,
    })
}

/// Standard error of a randomized p-value, from the smoothed fraction
/// `(count + 1) / (K + 2)` so that it never collapses to 0.
pub fn p_standard_error(p_hat: f64, k: usize) -> f64 {
    let count = (p_hat * (k + 1) as f64).round() - 1.0;
    let smoothed = (count + 1.0) / (k as f64 + 2.0);
    (smoothed * (1.0 - smoothed) / k as f64).sqrt()
}

/// Standard error of a single SHAPLIT p-value as an estimate of
/// `P[Gamma <= 0]`.
///
/// Combines the binomial error of the `K` null batches with the spread of the
/// p-value over independent draws of the test statistic,
/// `Var_t[(1 + #{t~ >= t}) / (K + 1)]`, estimated from `statistic_draws`.
/// The second term vanishes when the statistic is a point mass.
pub fn p_hat_standard_error(p_hat: f64, null_stats: &[f64], statistic_draws: &[f64]) -> f64 {
    let k = null_stats.len();
    let binomial = p_standard_error(p_hat, k).powi(2);
    if statistic_draws.len() < 2 {
        return binomial.sqrt();
    }
    let mut sorted = null_stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ps: Vec<f64> = statistic_draws
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&s| s < t);
            (1 + k - below) as f64 / (k + 1) as f64
        })
        .collect();
    let m = ps.len() as f64;
    let mean = ps.iter().sum::<f64>() / m;
    let spread = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (binomial + spread).sqrt()
}

/// Two-sample estimate of `P[Gamma <= 0] = P[f(X~_C) >= f(X~_{C+j})]` over
/// every pair of independent draws, with its standard error.
///
/// The error adds the two Mann-Whitney variance components to the binomial
/// floor of [`p_standard_error`] at the smaller sample size.
pub fn pairwise_p_limit(with: &[f64], without: &[f64]) -> (f64, f64) {
    if with.is_empty() || without.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut wo = without.to_vec();
    wo.sort_by(f64::total_cmp);
    let mut wi = with.to_vec();
    wi.sort_by(f64::total_cmp);
    // share of masked draws at or above each revealed draw, and vice versa
    let above: Vec<f64> = with
        .iter()
        .map(|&t| (wo.len() - wo.partition_point(|&s| s < t)) as f64 / wo.len() as f64)
        .collect();
    let below: Vec<f64> = without
        .iter()
        .map(|&s| wi.partition_point(|&t| t <= s) as f64 / wi.len() as f64)
        .collect();
    let p = above.iter().sum::<f64>() / above.len() as f64;
    let component = |v: &[f64]| {
        if v.len() < 2 {
            return 0.0;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n
    };
    let floor = p_standard_error(p, with.len().min(without.len())).powi(2);
    (p, (component(&above) + component(&below) + floor).sqrt())
}

/// Soft form of `p <= 1 - gamma` for estimates: allows three combined
/// standard errors.
pub fn soft_bound_holds(p_hat: f64, gamma_hat: f64, se_p: f64, se_gamma: f64) -> bool {
    p_hat <= 1.0 - gamma_hat + 3.0 * (se_p + se_gamma)
}

/// One Shapley summand with its test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub coalition: Coalition,
    pub weight: f64,
    pub gamma: f64,
    pub gamma_se: f64,
    pub p: f64,
    pub p_se: f64,
    /// `1 - gamma`, unclamped.
    pub bound: f64,
    pub reported_bound: f64,
    pub vacuous: bool,
    /// `3 (p_se + gamma_se)`; 0 for exact records.
    pub slack: f64,
    pub within_bound: bool,
}

impl BoundRecord {
    pub fn new(
        coalition: Coalition,
        weight: f64,
        gamma: f64,
        gamma_se: f64,
        p: f64,
        p_se: f64,
    ) -> Result<Self> {
        let b = bound_from_gamma(gamma.clamp(-1.0, 1.0))?;
        let slack = 3.0 * (p_se + gamma_se);
        Ok(BoundRecord {
            coalition,
            weight,
            gamma,
            gamma_se,
            p,
            p_se,
            bound: b.raw,
            reported_bound: b.reported,
            vacuous: b.vacuous,
            slack,
            within_bound: p <= b.raw + slack,
        })
    }

    /// Record from a gamma estimate and a SHAPLIT p-value over `k` null batches.
    pub fn monte_carlo(
        coalition: Coalition,
        weight: f64,
        gamma: &GammaEstimate,
        p_hat: f64,
        k: usize,
    ) -> Result<Self> {
        Self::new(
            coalition,
            weight,
            gamma.gamma_hat,
            gamma.std_error,
            p_hat,
            p_standard_error(p_hat, k),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalTest {
    pub feature: usize,
    pub phi: f64,
    /// `2 (1 - phi)`.
    pub p_global_bound: f64,
    pub weighted_p: f64,
    /// `2 * weighted_p`.
    pub p_global: f64,
    pub alpha: f64,
    /// `phi >= 1 - alpha / 2`.
    pub reject: bool,
}

/// Global test of feature `feature` from its per-coalition p-values.
///
/// `records` are `(coalition, weight, p)` and must cover every coalition of
/// the other players exactly once.
pub fn global_test(
    feature: usize,
    phi: f64,
    records: &[(Coalition, f64, f64)],
    alpha: f64,
) -> Result<GlobalTest> {
    let players = records
        .first()
        .map(|r| r.0.players())
        .ok_or_else(|| domain("global test needs per-coalition records"))?;
    if players < 2 {
        return Err(domain("global test needs at least 2 players"));
    }
    if feature >= players {
        return Err(domain(format!("feature {feature} out of range")));
    }
    let expected = 1usize << (players - 1);
    let mut seen = std::collections::HashSet::with_capacity(expected);
    for (c, _, _) in records {
        if c.players() != players || c.contains(feature) || !seen.insert(c.bits()) {
            return Err(domain(format!(
                "records must cover each coalition without player {feature} exactly once"
            )));
        }
    }
    if seen.len() != expected {
        return Err(domain(format!(
            "records cover {} of {expected} coalitions",
            seen.len()
        )));
    }
    let weighted_p: f64 = records.iter().map(|(_, w, p)| w * p).sum();
    Ok(GlobalTest {
        feature,
        phi,
        p_global_bound: 2.0 * (1.0 - phi),
        weighted_p,
        p_global: 2.0 * weighted_p,
        alpha,
        reject: global_rejects(phi, alpha),
    })
}

/// `phi >= 1 - alpha / 2`.
pub fn global_rejects(phi: f64, alpha: f64) -> bool {
    phi >= 1.0 - alpha / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{shapley_weight, Coalition};
    use crate::testing::p_value;

    #[test]
    fn bound_examples() {
        assert_eq!(bound_from_gamma(1.0).unwrap().reported, 0.0);
        let b = bound_from_gamma(0.0).unwrap();
        assert_eq!((b.reported, b.vacuous), (1.0, true));
        let b = bound_from_gamma(-0.3).unwrap();
        assert_eq!((b.raw, b.reported, b.vacuous), (1.3, 1.0, true));
        assert!(bound_from_gamma(1.2).is_err());
    }

    #[test]
    fn min_weight_examples() {
        assert_eq!(min_weight(2).unwrap(), 0.5);
        assert!((min_weight(4).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((min_weight(10).unwrap() - 1.0 / 1260.0).abs() < 1e-15);
    }

    #[test]
    fn min_weight_is_enumeration_minimum() {
        for n in 1..=20 {
            let enumerated = (0..n)
                .map(|c| shapley_weight(n, c).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(min_weight(n).unwrap(), enumerated, "n = {n}");
        }
    }

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_for_level(2, 0.05, true).unwrap() - 0.0125).abs() < 1e-15);
        assert_eq!(epsilon_for_level(5, 0.0, true).unwrap(), 0.0);
        assert!((epsilon_for_level(4, 0.05, false).unwrap() - 0.05 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_scales_as_inverse_sqrt_n_four_to_n() {
        let eps = |n: usize| epsilon_for_level(n, 0.05, true).unwrap();
        let scaled: Vec<f64> = (4..=14)
            .map(|n| eps(n) * (n as f64).sqrt() * 4f64.powi(n as i32))
            .collect();
        let (lo, hi) = scaled
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 2.0, "{scaled:?}");
        // ratios alternate with the parity of n; two-step ratios tend to 1/16
        let two_step: Vec<f64> = (4..=12).map(|n| eps(n + 2) / eps(n)).collect();
        assert!(
            two_step.iter().all(|r| (r - 0.0625).abs() < 0.015),
            "{two_step:?}"
        );
        assert!((two_step.last().unwrap() - 0.0625).abs() < (two_step[0] - 0.0625).abs());
    }

    #[test]
    fn implied_gamma_examples() {
        let g = min_gamma_implied(1.0, 0.0, 5).unwrap();
        assert_eq!((g.min_gamma, g.max_p), (1.0, 0.0));
        let g = min_gamma_implied(0.9, 0.1, 2).unwrap();
        assert!((g.min_gamma - 0.8).abs() < 1e-12 && (g.max_p - 0.2).abs() < 1e-12);
        assert!(!min_gamma_implied(0.2, 0.8, 4).unwrap().informative);
        assert!(matches!(
            min_gamma_implied(0.5, 0.1, 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn two_player_games_respect_implied_gamma() {
        // with two players, phi = (g_0 + g_1) / 2; any split with phi = 0.9 keeps both >= 0.8
        for i in 0..=20 {
            let g0 = 0.8 + 0.01 * i as f64;
            let g1 = 1.8 - g0;
            if g1 > 1.0 {
                continue;
            }
            assert!(g0.min(g1) >= 0.8 - 1e-12);
        }
    }

    fn full_records(n: usize, j: usize, p: f64) -> Vec<(Coalition, f64, f64)> {
        Coalition::excluding(n, j)
            .unwrap()
            .map(|c| (c, shapley_weight(n, c.len()).unwrap(), p))
            .collect()
    }

    #[test]
    fn global_examples() {
        let g = global_test(0, 1.0, &full_records(3, 0, 0.0), 0.01).unwrap();
        assert!(g.reject && g.p_global_bound == 0.0);
        let g = global_test(1, 0.5, &full_records(4, 1, 0.5), 0.05).unwrap();
        assert!(!g.reject && g.p_global_bound == 1.0);
        assert!((g.p_global - 2.0 * g.weighted_p).abs() == 0.0);
        let mut partial = full_records(3, 0, 0.1);
        partial.pop();
        assert!(global_test(0, 0.5, &partial, 0.05).is_err());
    }

    #[test]
    fn rejection_is_monotone_in_phi() {
        let rejects: Vec<bool> = (0..=100)
            .map(|i| global_rejects(i as f64 / 100.0, 0.05))
            .collect();
        assert!(rejects.windows(2).all(|w| !w[0] || w[1]));
    }

    #[test]
    fn soft_bound() {
        assert!(soft_bound_holds(0.01, 0.98, 0.0, 0.0));
        assert!(!soft_bound_holds(0.5, 0.98, 0.01, 0.01));
        let se = p_standard_error(1.0 / 1001.0, 1000);
        assert!(se > 0.0 && se < 0.002);
        // a point-mass statistic adds nothing to the binomial part
        let nulls: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let p = p_value(0.5, &nulls);
        assert_eq!(
            p_hat_standard_error(p, &nulls, &[0.5; 10]),
            p_standard_error(p, 100)
        );
        // a statistic split between 0 and 1 spreads p between 1 and 1/101
        let spread = p_hat_standard_error(1.0, &nulls, &[0.0, 1.0, 0.0, 1.0]);
        assert!(spread > 0.5 && spread < 0.6, "{spread}");
    }

    #[test]
    fn pairwise_limit_matches_brute_force() {
        let with = [0.2, 0.9, 0.5, 0.5, 0.1];
        let without = [0.5, 0.0, 0.3, 0.95];
        let count = with
            .iter()
            .flat_map(|a| without.iter().map(move |b| b >= a))
            .filter(|&x| x)
            .count();
        let (p, se) = pairwise_p_limit(&with, &without);
        assert!((p - count as f64 / 20.0).abs() < 1e-15);
        assert!(se > 0.0);
        // separated samples give 0 with only the binomial floor left
        let (p, se) = pairwise_p_limit(&[1.0; 50], &[0.0; 50]);
        assert_eq!(p, 0.0);
        assert!((se - p_standard_error(0.0, 50)).abs() < 1e-15);
    }
}
