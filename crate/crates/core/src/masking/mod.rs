//! Masked random vectors `[x_C, X_{-C}]`: the revealed coordinates come from
//! the explained sample, the rest are drawn from a conditional distribution.
//!
//! A [`ConditionalSampler`] works at the level of individual coordinates. A
//! [`Masker`] pairs it with a [`Partition`] so that players can be groups of
//! coordinates (image patches, quadrants) as well as single features.

mod dataset;
mod gaussian;
mod generators;
mod partition;
mod samplers;

use std::fmt;
use std::sync::Arc;

pub use dataset::{
    read_csv, write_csv, DatasetSideFile, GeneratedDataset, GeneratorParams, Sample,
};
pub use gaussian::{make_gaussian_conditional, GaussianConditional};
pub use generators::{
    boolean_rule, cross_signal, default_eta, generate_boolean, generate_patch_images,
    BooleanGenerator, Normalization, PatchGenerator, PatchGeometry,
};
pub use partition::Partition;
pub use samplers::{
    boolean_sampler, make_mean_imputation, BooleanMasking, Marginal, MeanImputation,
    MixtureComponent, PatchMasking, PatchSampler, ProductMarginal,
};

use crate::error::{domain, Result};
use crate::games::Coalition;
use crate::rng::StreamRng;

/// Source of reference completions `X_{-C} | X_C = x_C`.
///
/// Implementations are immutable after construction and shared across
/// worker threads.
pub trait ConditionalSampler: Send + Sync + fmt::Debug {
    /// Ambient dimension of the vectors this sampler completes.
    fn dim(&self) -> usize;

    /// Fixes `x` on the coordinates flagged in `revealed` and returns the
    /// resulting conditional distribution of the full vector.
    fn condition<'a>(&'a self, x: &'a [f64], revealed: &[bool])
        -> Result<Box<dyn Completion + 'a>>;

    /// True when every draw is identical (no randomness in the completion).
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// A conditioned distribution `D_{X_C = x_C}` over full-length vectors.
pub trait Completion: Send + Sync {
    /// Writes one draw into `out`. Revealed coordinates are copied from `x`
    /// exactly.
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]);
}

pub(crate) fn check_condition_args(dim: usize, x: &[f64], revealed: &[bool]) -> Result<()> {
    if x.len() != dim || revealed.len() != dim {
        return Err(domain(format!(
            "sampler of dimension {dim} given a vector of length {} and a mask of length {}",
            x.len(),
            revealed.len()
        )));
    }
    Ok(())
}

/// A sampler together with the grouping of coordinates into players.
#[derive(Clone, Debug)]
pub struct Masker {
    sampler: Arc<dyn ConditionalSampler>,
    partition: Partition,
}

impl Masker {
    pub fn new(sampler: Arc<dyn ConditionalSampler>, partition: Partition) -> Result<Self> {
        if sampler.dim() != partition.dim() {
            return Err(domain(format!(
                "sampler dimension {} does not match partition dimension {}",
                sampler.dim(),
                partition.dim()
            )));
        }
        Ok(Masker { sampler, partition })
    }

    /// Every coordinate is its own player.
    pub fn singletons(sampler: Arc<dyn ConditionalSampler>) -> Result<Self> {
        let partition = Partition::singletons(sampler.dim())?;
        Masker::new(sampler, partition)
    }

    pub fn players(&self) -> usize {
        self.partition.players()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn sampler(&self) -> &Arc<dyn ConditionalSampler> {
        &self.sampler
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn is_deterministic(&self) -> bool {
        self.sampler.is_deterministic()
    }

    pub fn condition<'a>(
        &'a self,
        x: &'a [f64],
        coalition: Coalition,
    ) -> Result<Box<dyn Completion + 'a>> {
        if x.len() != self.dim() {
            return Err(domain(format!(
                "sample has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let mask = self.partition.feature_mask(coalition)?;
        self.sampler.condition(x, &mask)
    }

    /// `draws` masked vectors revealing exactly the players in `coalition`.
    pub fn masked_draw(
        &self,
        x: &[f64],
        coalition: Coalition,
        draws: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>> {
        if draws == 0 {
            return Err(domain("draw count must be at least 1"));
        }
        let completion = self.condition(x, coalition)?;
        Ok((0..draws)
            .map(|_| {
                let mut row = vec![0.0; x.len()];
                completion.fill(rng, &mut row);
                row
            })
            .collect())
    }
}
