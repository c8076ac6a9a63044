//! Cooperative games over coalitions of features and their exact Shapley values.
//!
//! The value of player `j` is
//!
//! ```text
//! phi_j = sum over C ⊆ [n] \ {j} of  w_C * (v(C ∪ {j}) - v(C)),
//! w_C   = |C|! (n - |C| - 1)! / n!
//! ```
//!
//! Exact enumeration visits `2^(n-1)` coalitions per player and is capped at
//! [`MAX_EXACT_PLAYERS`]. Larger inputs are explained by grouping features
//! into players (see [`crate::explain`]).

mod axioms;
mod coalition;
mod weights;

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use axioms::{check_axioms, AxiomReport, NullityCheck, SymmetryCheck};
pub use coalition::{Coalition, MAX_PLAYERS};
pub use weights::{
    binomial, min_weight_exact, shapley_weight, shapley_weight_exact, ShapleyWeight,
};

use crate::error::{domain, Error, Result};

pub const MAX_EXACT_PLAYERS: usize = 24;
pub const MAX_PERMUTATION_PLAYERS: usize = 8;

const PARTITION_HINT: &str =
    "group features into at most 24 players with a partition (explain / --partition)";

/// A transferable-utility game `([n], v)`.
///
/// `value` may be called concurrently from many workers and must return the
/// same number for the same coalition every time.
pub trait CooperativeGame: Sync {
    fn players(&self) -> usize;
    fn value(&self, coalition: Coalition) -> Result<f64>;
}

/// A game given by its full table of `2^n` values, indexed by bit pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularGame {
    players: usize,
    values: Vec<f64>,
}

impl TabularGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players == 0 || players > MAX_EXACT_PLAYERS {
            return Err(domain(format!(
                "tabular games need 1..=24 players, got {players}"
            )));
        }
        if values.len() != 1 << players {
            return Err(domain(format!(
                "expected {} values, got {}",
                1u64 << players,
                values.len()
            )));
        }
        Ok(TabularGame { players, values })
    }

    pub fn from_fn(players: usize, mut f: impl FnMut(Coalition) -> f64) -> Result<Self> {
        let values = Coalition::all(players)?.map(&mut f).collect();
        TabularGame::new(players, values)
    }

    /// Values drawn uniformly from `[0, 1)`.
    pub fn random(players: usize, rng: &mut impl Rng) -> Result<Self> {
        TabularGame::from_fn(players, |_| rng.random::<f64>())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CooperativeGame for TabularGame {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        if coalition.players() != self.players {
            return Err(domain("coalition belongs to a game of another size"));
        }
        Ok(self.values[coalition.bits() as usize])
    }
}

/// Adapts a closure into a game.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F: Fn(Coalition) -> f64 + Sync> FnGame<F> {
    pub fn new(players: usize, f: F) -> Self {
        FnGame { players, f }
    }
}

impl<F: Fn(Coalition) -> f64 + Sync> CooperativeGame for FnGame<F> {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

/// One Shapley summand: coalition `C`, its weight `w_C` and the marginal
/// contribution `v(C ∪ {j}) - v(C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub coalition: Coalition,
    pub weight: f64,
    pub marginal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub feature: usize,
    pub phi: f64,
    pub contributions: Vec<Contribution>,
}

impl ShapleyResult {
    /// Rebuilds `phi` from the stored summands in enumeration order.
    pub fn recompute_phi(&self) -> f64 {
        self.contributions
            .iter()
            .map(|c| c.weight * c.marginal)
            .sum()
    }
}

fn check_exact(players: usize, feature: usize) -> Result<()> {
    if players > MAX_EXACT_PLAYERS {
        return Err(Error::Capacity {
            players,
            limit: MAX_EXACT_PLAYERS,
            hint: PARTITION_HINT,
        });
    }
    if players == 0 || feature >= players {
        return Err(domain(format!("feature {feature} outside 0..{players}")));
    }
    Ok(())
}

/// Weights `w_C` indexed by coalition size.
fn weight_table(players: usize) -> Result<Vec<f64>> {
    (0..players).map(|c| shapley_weight(players, c)).collect()
}

fn assemble(feature: usize, contributions: Vec<Contribution>) -> ShapleyResult {
    let phi = contributions.iter().map(|c| c.weight * c.marginal).sum();
    ShapleyResult {
        feature,
        phi,
        contributions,
    }
}

/// Exact Shapley value of `feature`, evaluating `v` twice per coalition.
pub fn exact_shapley<G: CooperativeGame + ?Sized>(
    game: &G,
    feature: usize,
) -> Result<ShapleyResult> {
    let n = game.players();
    check_exact(n, feature)?;
    let weights = weight_table(n)?;
    let contributions = (0..1u64 << (n - 1))
        .into_par_iter()
        .map(|i| {
            let coalition = Coalition::nth_excluding(n, feature, i);
            let marginal = game.value(coalition.with(feature))? - game.value(coalition)?;
            Ok(Contribution {
                coalition,
                weight: weights[coalition.len()],
                marginal,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(feature, contributions))
}

/// Evaluates `v` on every coalition, in ascending bit order.
pub fn tabulate<G: CooperativeGame + ?Sized>(game: &G) -> Result<TabularGame> {
    let n = game.players();
    if n == 0 || n > MAX_EXACT_PLAYERS {
        return Err(Error::Capacity {
            players: n,
            limit: MAX_EXACT_PLAYERS,
            hint: PARTITION_HINT,
        });
    }
    let values = (0..1u64 << n)
        .into_par_iter()
        .map(|bits| game.value(Coalition::from_bits(n, bits)?))
        .collect::<Result<Vec<_>>>()?;
    TabularGame::new(n, values)
}

/// Exact Shapley values of all players, evaluating `v` once per coalition.
pub fn exact_shapley_all<G: CooperativeGame + ?Sized>(game: &G) -> Result<Vec<ShapleyResult>> {
    let table = tabulate(game)?;
    (0..table.players)
        .map(|j| exact_shapley(&table, j))
        .collect()
}

/// Shapley value as the average marginal contribution over all `n!` orderings.
/// Independent of the coalition-weight formula; limited to 8 players.
pub fn permutation_shapley<G: CooperativeGame + ?Sized>(game: &G, feature: usize) -> Result<f64> {
    let n = game.players();
    if n > MAX_PERMUTATION_PLAYERS {
        return Err(Error::Capacity {
            players: n,
            limit: MAX_PERMUTATION_PLAYERS,
            hint: "permutation enumeration is an oracle for small games only",
        });
    }
    check_exact(n, feature)?;
    let mut total = 0.0;
    let mut count = 0u64;
    for order in (0..n).permutations(n) {
        let mut before = Coalition::empty(n)?;
        for &p in &order {
            if p == feature {
                break;
            }
            before = before.with(p);
        }
        total += game.value(before.with(feature))? - game.value(before)?;
        count += 1;
    }
    Ok(total / count as f64)
}
