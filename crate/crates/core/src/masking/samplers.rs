use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::generators::{Normalization, PatchGenerator, PatchGeometry};
use super::{check_condition_args, Completion, ConditionalSampler};
use crate::error::{domain, Result};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Distribution of a single coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    NormalMixture { components: Vec<MixtureComponent> },
    Constant { value: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match self {
            Marginal::Normal { sd, .. } if sd.is_nan() || *sd < 0.0 => {
                Err(domain("normal sd must be >= 0"))
            }
            Marginal::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(domain("Bernoulli p must lie in [0, 1]"))
            }
            Marginal::NormalMixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.is_empty()
                    || components
                        .iter()
                        .any(|c| c.weight < 0.0 || c.sd.is_nan() || c.sd < 0.0)
                    || (total - 1.0).abs() > 1e-9
                {
                    Err(domain("mixture weights must be non-negative and sum to 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Marginal::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Marginal::NormalMixture { components } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = components[components.len() - 1];
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        pick = *c;
                        break;
                    }
                }
                let z: f64 = StandardNormal.sample(rng);
                pick.mean + pick.sd * z
            }
            Marginal::Constant { value } => *value,
        }
    }
}

/// Independent coordinates: the conditional of the hidden block equals its marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMarginal {
    marginals: Vec<Marginal>,
}

impl ProductMarginal {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(domain("product sampler needs at least one coordinate"));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(ProductMarginal { marginals })
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }
}

struct ProductCompletion<'a> {
    x: &'a [f64],
    revealed: Vec<bool>,
    marginals: &'a [Marginal],
}

impl Completion for ProductCompletion<'_> {
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.revealed[i] {
                self.x[i]
            } else {
                self.marginals[i].sample(rng)
            };
        }
    }
}

impl ConditionalSampler for ProductMarginal {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn condition<'a>(
        &'a self,
        x: &'a [f64],
        revealed: &[bool],
    ) -> Result<Box<dyn Completion + 'a>> {
        check_condition_args(self.dim(), x, revealed)?;
        Ok(Box::new(ProductCompletion {
            x,
            revealed: revealed.to_vec(),
            marginals: &self.marginals,
        }))
    }

    fn is_deterministic(&self) -> bool {
        self.marginals
            .iter()
            .all(|m| matches!(m, Marginal::Constant { .. }))
    }
}

/// Hidden coordinates are replaced by a fixed reference, usually the
/// training-split mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanImputation {
    mean: Vec<f64>,
}

pub fn make_mean_imputation(training_mean: Vec<f64>) -> MeanImputation {
    MeanImputation {
        mean: training_mean,
    }
}

impl MeanImputation {
    pub fn reference(&self) -> &[f64] {
        &self.mean
    }

    /// Column means of `rows`.
    pub fn from_rows<'r>(rows: impl IntoIterator<Item = &'r [f64]>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for r in rows {
            if count == 0 {
                sum = vec![0.0; r.len()];
            } else if r.len() != sum.len() {
                return Err(domain("rows of unequal length"));
            }
            sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
            count += 1;
        }
        if count == 0 {
            return Err(domain("mean imputation needs at least one row"));
        }
        Ok(make_mean_imputation(
            sum.into_iter().map(|s| s / count as f64).collect(),
        ))
    }
}

struct ImputedCompletion<'a> {
    x: &'a [f64],
    revealed: Vec<bool>,
    reference: &'a [f64],
}

impl Completion for ImputedCompletion<'_> {
    fn fill(&self, _rng: &mut StreamRng, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.revealed[i] {
                self.x[i]
            } else {
                self.reference[i]
            };
        }
    }
}

impl ConditionalSampler for MeanImputation {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn condition<'a>(
        &'a self,
        x: &'a [f64],
        revealed: &[bool],
    ) -> Result<Box<dyn Completion + 'a>> {
        check_condition_args(self.dim(), x, revealed)?;
        Ok(Box::new(ImputedCompletion {
            x,
            revealed: revealed.to_vec(),
            reference: &self.mean,
        }))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// How hidden coordinates of the Boolean-block data are redrawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BooleanMasking {
    /// Every hidden coordinate is drawn from the unimportant distribution `N(0, 1)`.
    Unimportant,
    /// The important index of each block is known; hidden coordinates keep
    /// their generative marginal (`N(mu, 1)` at the important index).
    Oracle { important: Vec<usize> },
    /// The important index is withheld: each coordinate is the mixture
    /// `(1/n) N(mu, 1) + (1 - 1/n) N(0, 1)`.
    Mixture,
}

pub fn boolean_sampler(
    blocks: usize,
    width: usize,
    important_mean: f64,
    mode: &BooleanMasking,
) -> Result<ProductMarginal> {
    if blocks == 0 || width == 0 {
        return Err(domain("Boolean data needs k, n >= 1"));
    }
    let dim = blocks * width;
    let unimportant = Marginal::Normal { mean: 0.0, sd: 1.0 };
    let important = Marginal::Normal {
        mean: important_mean,
        sd: 1.0,
    };
    let marginals = match mode {
        BooleanMasking::Unimportant => vec![unimportant; dim],
        BooleanMasking::Oracle { important: idx } => {
            if idx.len() != blocks
                || idx
                    .iter()
                    .enumerate()
                    .any(|(b, &i)| i / width != b || i >= dim)
            {
                return Err(domain("oracle needs one important index inside each block"));
            }
            (0..dim)
                .map(|i| {
                    if idx.contains(&i) {
                        important.clone()
                    } else {
                        unimportant.clone()
                    }
                })
                .collect()
        }
        BooleanMasking::Mixture => {
            let w = 1.0 / width as f64;
            vec![
                Marginal::NormalMixture {
                    components: vec![
                        MixtureComponent {
                            weight: w,
                            mean: important_mean,
                            sd: 1.0
                        },
                        MixtureComponent {
                            weight: 1.0 - w,
                            mean: 0.0,
                            sd: 1.0
                        },
                    ],
                };
                dim
            ]
        }
    };
    ProductMarginal::new(marginals)
}

/// How hidden patches of a patch image are redrawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMasking {
    /// Hidden patches are pure noise (the unimportant distribution).
    Unimportant,
    /// Hidden patches follow the generative mixture, carrying the signal with
    /// probability `eta`.
    Generative,
}

/// Patch-granular sampler for the synthetic image generator. Masks must
/// reveal or hide whole patches.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSampler {
    geometry: PatchGeometry,
    x0: Vec<f64>,
    sigma: f64,
    eta: f64,
    normalization: Normalization,
    mode: PatchMasking,
}

impl PatchSampler {
    pub fn from_generator(generator: &PatchGenerator, mode: PatchMasking) -> Self {
        PatchSampler {
            geometry: generator.geometry,
            x0: generator.x0.clone(),
            sigma: generator.sigma2.sqrt(),
            eta: generator.eta,
            normalization: generator.normalization,
            mode,
        }
    }
}

struct PatchCompletion<'a> {
    sampler: &'a PatchSampler,
    x: &'a [f64],
    hidden: Vec<Vec<usize>>,
}

impl Completion for PatchCompletion<'_> {
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out.copy_from_slice(self.x);
        let s = self.sampler;
        for pixels in &self.hidden {
            let signal = s.mode == PatchMasking::Generative && rng.random::<f64>() < s.eta;
            for (k, &i) in pixels.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                let raw = if signal { s.x0[k] } else { 0.0 } + s.sigma * z;
                out[i] = s.normalization.apply(raw);
            }
        }
    }
}

impl ConditionalSampler for PatchSampler {
    fn dim(&self) -> usize {
        self.geometry.dim()
    }

    fn condition<'a>(
        &'a self,
        x: &'a [f64],
        revealed: &[bool],
    ) -> Result<Box<dyn Completion + 'a>> {
        check_condition_args(self.dim(), x, revealed)?;
        let mut hidden = Vec::new();
        for p in 0..self.geometry.patches() {
            let pixels = self.geometry.patch_pixels(p);
            let shown = pixels.iter().filter(|&&i| revealed[i]).count();
            if shown == 0 {
                hidden.push(pixels);
            } else if shown != pixels.len() {
                return Err(domain(format!(
                    "mask splits patch {p}; patch samplers mask whole patches"
                )));
            }
        }
        Ok(Box::new(PatchCompletion {
            sampler: self,
            x,
            hidden,
        }))
    }
}
