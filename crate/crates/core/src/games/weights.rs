use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// An exact Shapley weight `1 / denom`.
///
/// `|C|! (n-|C|-1)! / n!` always reduces to `1 / (n * binom(n-1, |C|))`, so
/// only the denominator is stored. It is an integer below `2^70` for every
/// `n <= 64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapleyWeight {
    pub denom: u128,
}

impl ShapleyWeight {
    pub fn value(self) -> f64 {
        1.0 / self.denom as f64
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    // Each partial product is itself a binomial coefficient, so the division is exact.
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub fn shapley_weight_exact(players: usize, size: usize) -> Result<ShapleyWeight> {
    if players == 0 || players > 64 {
        return Err(domain(format!("player count {players} outside 1..=64")));
    }
    if size >= players {
        return Err(domain(format!(
            "coalition size {size} outside 0..={}",
            players - 1
        )));
    }
    Ok(ShapleyWeight {
        denom: players as u128 * binomial(players as u64 - 1, size as u64),
    })
}

/// `w_C = |C|! (n - |C| - 1)! / n!` for a coalition of `size` players out of `players`.
pub fn shapley_weight(players: usize, size: usize) -> Result<f64> {
    shapley_weight_exact(players, size).map(ShapleyWeight::value)
}

/// The smallest Shapley weight among coalitions of an `n`-player game:
/// `1 / (n * binom(n-1, floor((n-1)/2)))`.
pub fn min_weight_exact(players: usize) -> Result<ShapleyWeight> {
    if players == 0 {
        return Err(domain("min_weight needs at least one player"));
    }
    shapley_weight_exact(players, (players - 1) / 2)
}
