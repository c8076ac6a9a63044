use serde::{Deserialize, Serialize};

use super::{Coalition, CooperativeGame, ShapleyResult};
use crate::error::{domain, Result};

/// Residual tolerance for an axiom to pass.
const PASS_TOL: f64 = 1e-10;
/// Tolerance for detecting null players and symmetric pairs from game values.
const DETECT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullityCheck {
    pub player: usize,
    pub phi: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub first: usize,
    pub second: usize,
    pub difference: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// `v(∅)`; not assumed to be zero.
    pub empty_value: f64,
    /// `sum_j phi_j - (v([n]) - v(∅))`.
    pub additivity_residual: f64,
    pub additivity_pass: bool,
    pub nullity: Vec<NullityCheck>,
    pub symmetry: Vec<SymmetryCheck>,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.additivity_pass
            && self.nullity.iter().all(|c| c.pass)
            && self.symmetry.iter().all(|c| c.pass)
    }
}

/// Checks efficiency (additivity), nullity on detected null players and
/// symmetry on detected symmetric pairs against already computed values.
pub fn check_axioms<G: CooperativeGame + ?Sized>(
    game: &G,
    results: &[ShapleyResult],
) -> Result<AxiomReport> {
    let n = game.players();
    if results.len() != n {
        return Err(domain(format!(
            "expected {n} results, got {}",
            results.len()
        )));
    }
    let mut phi = vec![0.0; n];
    for r in results {
        if r.feature >= n {
            return Err(domain(format!("result for unknown feature {}", r.feature)));
        }
        phi[r.feature] = r.phi;
    }
    let table: Vec<f64> = Coalition::all(n)?
        .map(|c| game.value(c))
        .collect::<Result<_>>()?;
    let empty_value = table[0];
    let grand = table[table.len() - 1];
    let additivity_residual = phi.iter().sum::<f64>() - (grand - empty_value);

    let nullity = (0..n)
        .filter(|&j| {
            Coalition::excluding(n, j).unwrap().all(|c| {
                (table[c.with(j).bits() as usize] - table[c.bits() as usize]).abs() <= DETECT_TOL
            })
        })
        .map(|j| NullityCheck {
            player: j,
            phi: phi[j],
            pass: phi[j].abs() <= PASS_TOL,
        })
        .collect();

    let mut symmetry = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let symmetric = Coalition::all(n)?
                .filter(|c| !c.contains(a) && !c.contains(b))
                .all(|c| {
                    (table[c.with(a).bits() as usize] - table[c.with(b).bits() as usize]).abs()
                        <= DETECT_TOL
                });
            if symmetric {
                let difference = phi[a] - phi[b];
                symmetry.push(SymmetryCheck {
                    first: a,
                    second: b,
                    difference,
                    pass: difference.abs() <= PASS_TOL,
                });
            }
        }
    }

    Ok(AxiomReport {
        empty_value,
        additivity_residual,
        additivity_pass: additivity_residual.abs() <= PASS_TOL,
        nullity,
        symmetry,
    })
}
