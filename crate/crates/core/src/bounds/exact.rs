//! Exact rational evaluation of Shapley summands and SHAPLIT limits on small
//! discrete games: binary features with a product-Bernoulli sampler and a
//! tabulated predictor.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::games::{shapley_weight_exact, Coalition};

pub type Q = Ratio<i128>;

/// Upper limit on features; the table has `2^n` entries.
pub const MAX_TOY_FEATURES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteToy {
    /// `P[X_i = 1]` per feature.
    pub probs: Vec<Q>,
    /// `f` on every binary input, indexed by bit pattern (bit `i` is `x_i`).
    pub table: Vec<Q>,
}

/// Exact summand of `phi_j`: weight, `gamma` and `p = P[Gamma <= 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRecord {
    pub coalition: Coalition,
    pub weight: Q,
    pub gamma: Q,
    pub p: Q,
}

impl DiscreteToy {
    pub fn new(probs: Vec<Q>, table: Vec<Q>) -> Result<Self> {
        let n = probs.len();
        if n == 0 || n > MAX_TOY_FEATURES || table.len() != 1 << n {
            return Err(domain(
                "toy needs 1..=10 features and a table of 2^n values",
            ));
        }
        let unit = |q: &Q| *q >= Q::from_integer(0) && *q <= Q::from_integer(1);
        if !probs.iter().all(unit) || !table.iter().all(unit) {
            return Err(domain(
                "probabilities and predictor values must lie in [0, 1]",
            ));
        }
        Ok(DiscreteToy { probs, table })
    }

    /// Probabilities on the grid `1/16, ..., 15/16`, predictor values on the
    /// grid `0, 1/64, ..., 1`.
    pub fn random(features: usize, rng: &mut impl Rng) -> Result<Self> {
        let probs = (0..features)
            .map(|_| Q::new(rng.random_range(1..16), 16))
            .collect();
        let table = (0..1usize << features)
            .map(|_| Q::new(rng.random_range(0..=64), 64))
            .collect();
        DiscreteToy::new(probs, table)
    }

    pub fn features(&self) -> usize {
        self.probs.len()
    }

    /// Distribution of `f(X~_C)` for the sample `x` (bit pattern) as
    /// `(value, probability)` atoms, one per completion.
    fn masked_law(&self, x: u64, c: Coalition) -> Vec<(Q, Q)> {
        let n = self.features();
        let hidden: Vec<usize> = (0..n).filter(|&i| !c.contains(i)).collect();
        let one = Q::from_integer(1);
        (0..1u64 << hidden.len())
            .map(|assign| {
                let mut bits = x & c.bits();
                let mut prob = one;
                for (k, &i) in hidden.iter().enumerate() {
                    if assign >> k & 1 == 1 {
                        bits |= 1 << i;
                        prob *= self.probs[i];
                    } else {
                        prob *= one - self.probs[i];
                    }
                }
                (self.table[bits as usize], prob)
            })
            .collect()
    }

    fn mean(law: &[(Q, Q)]) -> Q {
        law.iter().map(|(v, p)| v * p).sum()
    }

    /// `gamma_{j,C}` and `P[Gamma_{j,C} <= 0]` with the two masked
    /// evaluations independent.
    pub fn summand(&self, x: u64, j: usize, c: Coalition) -> Result<(Q, Q)> {
        if j >= self.features() || c.contains(j) || c.players() != self.features() {
            return Err(domain("invalid feature or coalition"));
        }
        let with = self.masked_law(x, c.with(j));
        let without = self.masked_law(x, c);
        let gamma = Self::mean(&with) - Self::mean(&without);
        let mut p = Q::from_integer(0);
        for (a, pa) in &with {
            for (b, pb) in &without {
                if a <= b {
                    p += pa * pb;
                }
            }
        }
        Ok((gamma, p))
    }

    /// All `2^{n-1}` summands of `phi_j` in ascending coalition order.
    pub fn records(&self, x: u64, j: usize) -> Result<Vec<ExactRecord>> {
        let n = self.features();
        Coalition::excluding(n, j)?
            .map(|c| {
                let w = shapley_weight_exact(n, c.len())?;
                let (gamma, p) = self.summand(x, j, c)?;
                Ok(ExactRecord {
                    coalition: c,
                    weight: Q::new(1, w.denom as i128),
                    gamma,
                    p,
                })
            })
            .collect()
    }

    pub fn phi(records: &[ExactRecord]) -> Q {
        records.iter().map(|r| r.weight * r.gamma).sum()
    }

    pub fn weighted_p(records: &[ExactRecord]) -> Q {
        records.iter().map(|r| r.weight * r.p).sum()
    }
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}
