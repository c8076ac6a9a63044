use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{check_condition_args, Completion, ConditionalSampler};
use crate::error::{domain, Result};
use crate::rng::StreamRng;

/// Multivariate normal `N(mean, covariance)` conditioned through the Schur
/// complement of the revealed block.
#[derive(Debug)]
pub struct GaussianConditional {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    // Gain and Cholesky factor depend only on the mask, not on x.
    blocks: Mutex<HashMap<Vec<bool>, Arc<Block>>>,
}

#[derive(Debug)]
struct Block {
    hidden: Vec<usize>,
    revealed: Vec<usize>,
    /// `Σ_hr Σ_rr^{-1}`
    gain: DMatrix<f64>,
    /// Lower Cholesky factor of `Σ_hh - Σ_hr Σ_rr^{-1} Σ_rh`.
    chol: DMatrix<f64>,
}

pub fn make_gaussian_conditional(
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
) -> Result<GaussianConditional> {
    let n = mean.len();
    if n == 0 {
        return Err(domain("Gaussian sampler needs at least one coordinate"));
    }
    if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
        return Err(domain(format!("covariance must be {n}x{n}")));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                return Err(domain(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    if cov.clone().cholesky().is_none() {
        return Err(domain("covariance is not positive definite"));
    }
    Ok(GaussianConditional {
        mean: DVector::from_vec(mean),
        cov,
        blocks: Mutex::new(HashMap::new()),
    })
}

impl GaussianConditional {
    fn block(&self, revealed: &[bool]) -> Result<Arc<Block>> {
        if let Some(b) = self.blocks.lock().unwrap().get(revealed) {
            return Ok(Arc::clone(b));
        }
        let hidden: Vec<usize> = (0..revealed.len()).filter(|&i| !revealed[i]).collect();
        let shown: Vec<usize> = (0..revealed.len()).filter(|&i| revealed[i]).collect();
        let (h, r) = (hidden.len(), shown.len());
        let s_hh = self.cov.select_rows(&hidden).select_columns(&hidden);
        let (gain, cond) = if r == 0 {
            (DMatrix::zeros(h, 0), s_hh)
        } else {
            let s_rr = self.cov.select_rows(&shown).select_columns(&shown);
            let s_rh = self.cov.select_rows(&shown).select_columns(&hidden);
            let chol_rr = s_rr
                .cholesky()
                .ok_or_else(|| domain("revealed covariance block is singular"))?;
            let gain = chol_rr.solve(&s_rh).transpose();
            let cond = &s_hh - &gain * &s_rh;
            (gain, cond)
        };
        let cond = (&cond + cond.transpose()) * 0.5;
        let chol = if h == 0 {
            DMatrix::zeros(0, 0)
        } else {
            cond.cholesky()
                .ok_or_else(|| domain("conditional covariance is not positive definite"))?
                .l()
        };
        let block = Arc::new(Block {
            hidden,
            revealed: shown,
            gain,
            chol,
        });
        self.blocks
            .lock()
            .unwrap()
            .insert(revealed.to_vec(), Arc::clone(&block));
        Ok(block)
    }

    /// Mean and covariance of the hidden coordinates given `x` on the revealed ones.
    pub fn conditional_moments(
        &self,
        x: &[f64],
        revealed: &[bool],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        check_condition_args(self.mean.len(), x, revealed)?;
        let b = self.block(revealed)?;
        let mu = self.hidden_mean(&b, x);
        Ok((mu.as_slice().to_vec(), &b.chol * b.chol.transpose()))
    }

    fn hidden_mean(&self, b: &Block, x: &[f64]) -> DVector<f64> {
        let mu_h = DVector::from_iterator(b.hidden.len(), b.hidden.iter().map(|&i| self.mean[i]));
        if b.revealed.is_empty() {
            return mu_h;
        }
        let dev = DVector::from_iterator(
            b.revealed.len(),
            b.revealed.iter().map(|&i| x[i] - self.mean[i]),
        );
        mu_h + &b.gain * dev
    }
}

struct GaussianCompletion<'a> {
    x: &'a [f64],
    block: Arc<Block>,
    mu: DVector<f64>,
}

impl Completion for GaussianCompletion<'_> {
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out.copy_from_slice(self.x);
        let h = self.block.hidden.len();
        if h == 0 {
            return;
        }
        let z: Vec<f64> = (0..h).map(|_| StandardNormal.sample(rng)).collect();
        let l = &self.block.chol;
        for (a, &i) in self.block.hidden.iter().enumerate() {
            let mut v = self.mu[a];
            for (b, zb) in z.iter().enumerate().take(a + 1) {
                v += l[(a, b)] * zb;
            }
            out[i] = v;
        }
    }
}

impl ConditionalSampler for GaussianConditional {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn condition<'a>(
        &'a self,
        x: &'a [f64],
        revealed: &[bool],
    ) -> Result<Box<dyn Completion + 'a>> {
        check_condition_args(self.dim(), x, revealed)?;
        let block = self.block(revealed)?;
        let mu = self.hidden_mean(&block, x);
        Ok(Box::new(GaussianCompletion { x, block, mu }))
    }
}
