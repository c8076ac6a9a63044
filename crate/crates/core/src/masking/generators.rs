//! Synthetic data generators: the Boolean-block data and the patch images.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{GeneratedDataset, GeneratorParams, Sample};
use super::partition::Partition;
use crate::error::{domain, Error, Result};
use crate::rng::{stream, tag, StreamRng};

/// Label of the Boolean-block rule: every block of width `n` holds an entry
/// with `|value| >= t`.
pub fn boolean_rule(values: &[f64], k: usize, n: usize, t: f64) -> u8 {
    debug_assert_eq!(values.len(), k * n);
    values.chunks(n).all(|b| b.iter().any(|v| v.abs() >= t)) as u8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BooleanGenerator {
    pub k: usize,
    pub n: usize,
    pub important_mean: f64,
    pub threshold: f64,
}

impl BooleanGenerator {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(domain("Boolean generator needs k, n >= 1"));
        }
        Ok(BooleanGenerator {
            k,
            n,
            important_mean: 4.0,
            threshold: 3.0,
        })
    }

    pub fn with_important_mean(mut self, mean: f64) -> Self {
        self.important_mean = mean;
        self
    }

    pub fn dim(&self) -> usize {
        self.k * self.n
    }

    /// One sample and its important indices (one per block).
    pub fn draw(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<usize>) {
        let important: Vec<usize> = (0..self.k)
            .map(|b| b * self.n + rng.random_range(0..self.n))
            .collect();
        let mut values: Vec<f64> = (0..self.dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        for &i in &important {
            values[i] += self.important_mean;
        }
        (values, important)
    }

    pub fn label(&self, values: &[f64]) -> u8 {
        boolean_rule(values, self.k, self.n, self.threshold)
    }

    pub fn sample_at(&self, seed: u64, index: u64) -> (Sample, Vec<usize>) {
        let (values, important) = self.draw(&mut stream(seed, &[tag::SAMPLE, index]));
        let label = self.label(&values);
        (Sample::labeled(values, label), important)
    }

    /// The first `count` positive samples in index order, scanning at most
    /// `budget` indices.
    pub fn positive_samples(
        &self,
        count: usize,
        seed: u64,
        budget: u64,
    ) -> Result<Vec<(Sample, Vec<usize>)>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..budget {
            if out.len() == count {
                break;
            }
            let (s, imp) = self.sample_at(seed, i);
            if s.label == Some(1) {
                out.push((s, imp));
            }
        }
        if out.len() < count {
            return Err(Error::Generation(format!(
                "found {} of {count} positive samples within {budget} draws",
                out.len()
            )));
        }
        Ok(out)
    }

    fn params(&self) -> GeneratorParams {
        GeneratorParams::Boolean(self.clone())
    }
}

pub fn generate_boolean(k: usize, n: usize, count: usize, seed: u64) -> Result<GeneratedDataset> {
    let g = BooleanGenerator::new(k, n)?;
    let (samples, truth) = (0..count as u64)
        .into_par_iter()
        .map(|i| g.sample_at(seed, i))
        .unzip();
    Ok(GeneratedDataset {
        params: g.params(),
        samples,
        truth,
    })
}

/// An image of `r x s` patches, each `d x d` pixels, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub d: usize,
    pub r: usize,
    pub s: usize,
}

impl PatchGeometry {
    pub fn new(d: usize, r: usize, s: usize) -> Result<Self> {
        if d == 0 || r == 0 || s == 0 {
            return Err(domain("patch geometry needs d, r, s >= 1"));
        }
        Ok(PatchGeometry { d, r, s })
    }

    pub fn height(&self) -> usize {
        self.d * self.r
    }

    pub fn width(&self) -> usize {
        self.d * self.s
    }

    pub fn dim(&self) -> usize {
        self.height() * self.width()
    }

    pub fn patches(&self) -> usize {
        self.r * self.s
    }

    /// Flat index of pixel `(u, v)` inside patch `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize, u: usize, v: usize) -> usize {
        (i * self.d + u) * self.width() + j * self.d + v
    }

    /// Pixels of patch `p = i * s + j`, in the patch's own row-major order.
    pub fn patch_pixels(&self, p: usize) -> Vec<usize> {
        let (i, j) = (p / self.s, p % self.s);
        let mut out = Vec::with_capacity(self.d * self.d);
        for u in 0..self.d {
            for v in 0..self.d {
                out.push(self.pixel(i, j, u, v));
            }
        }
        out
    }

    pub fn patch_partition(&self) -> Result<Partition> {
        Partition::new(
            self.dim(),
            (0..self.patches()).map(|p| self.patch_pixels(p)).collect(),
        )
    }
}

/// A `d x d` plus-shaped cross: ones on the middle row and column.
pub fn cross_signal(d: usize) -> Vec<f64> {
    let c = d / 2;
    let mut x0 = vec![0.0; d * d];
    for t in 0..d {
        x0[c * d + t] = 1.0;
        x0[t * d + c] = 1.0;
    }
    x0
}

/// Activation probability giving `P[Y = 1] = 1/2` with `players` patches.
pub fn default_eta(players: usize) -> f64 {
    1.0 - 0.5f64.powf(1.0 / players as f64)
}

/// Affine pixel normalization `(x - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        mean: 0.0,
        std: 1.0,
    };

    /// Population mean and standard deviation of a pixel drawn uniformly from
    /// an image of the patch model.
    pub fn population(x0: &[f64], sigma2: f64, eta: f64) -> Self {
        let m = x0.len() as f64;
        let mean = eta * x0.iter().sum::<f64>() / m;
        let second = eta * x0.iter().map(|v| v * v).sum::<f64>() / m + sigma2;
        Normalization {
            mean,
            std: (second - mean * mean).sqrt(),
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }
}

/// Patch images: each patch independently carries `x0 + v` with probability
/// `eta`, otherwise pure noise `v ~ N(0, sigma2 I)`. The label is positive iff
/// some patch carries the signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGenerator {
    pub geometry: PatchGeometry,
    pub x0: Vec<f64>,
    pub sigma2: f64,
    pub eta: f64,
    pub normalization: Normalization,
    /// When set, exactly these patches carry the signal in every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_signals: Option<Vec<usize>>,
}

impl PatchGenerator {
    /// Generator with the cross signal, default `eta` and population
    /// normalization.
    pub fn new(geometry: PatchGeometry, sigma2: f64) -> Result<Self> {
        let eta = default_eta(geometry.patches());
        Self::with_params(geometry, cross_signal(geometry.d), sigma2, eta)
    }

    pub fn with_params(
        geometry: PatchGeometry,
        x0: Vec<f64>,
        sigma2: f64,
        eta: f64,
    ) -> Result<Self> {
        if sigma2.is_nan() || sigma2 <= 0.0 {
            return Err(domain("noise variance must be > 0"));
        }
        if x0.len() != geometry.d * geometry.d {
            return Err(domain(format!(
                "target patch has {} entries, expected {}",
                x0.len(),
                geometry.d * geometry.d
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(domain("eta must lie in [0, 1]"));
        }
        let normalization = Normalization::population(&x0, sigma2, eta);
        Ok(PatchGenerator {
            geometry,
            x0,
            sigma2,
            eta,
            normalization,
            forced_signals: None,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Same model at another noise level, keeping the normalization.
    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if sigma2.is_nan() || sigma2 <= 0.0 {
            return Err(domain("noise variance must be > 0"));
        }
        self.sigma2 = sigma2;
        Ok(self)
    }

    pub fn with_forced_signals(mut self, patches: Vec<usize>) -> Result<Self> {
        if patches.iter().any(|&p| p >= self.geometry.patches()) {
            return Err(domain("forced signal patch out of range"));
        }
        self.forced_signals = Some(patches);
        Ok(self)
    }

    /// One normalized image and the indices of its signal patches.
    pub fn draw(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<usize>) {
        let g = self.geometry;
        let sigma = self.sigma2.sqrt();
        let mut values = vec![0.0; g.dim()];
        let mut signals = Vec::new();
        for p in 0..g.patches() {
            let on = match &self.forced_signals {
                Some(f) => f.contains(&p),
                None => rng.random::<f64>() < self.eta,
            };
            if on {
                signals.push(p);
            }
            for (k, i) in g.patch_pixels(p).into_iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                let raw = if on { self.x0[k] } else { 0.0 } + sigma * z;
                values[i] = self.normalization.apply(raw);
            }
        }
        (values, signals)
    }

    pub fn sample_at(&self, seed: u64, index: u64) -> (Sample, Vec<usize>) {
        let (values, signals) = self.draw(&mut stream(seed, &[tag::SAMPLE, index]));
        let label = u8::from(!signals.is_empty());
        (Sample::labeled(values, label), signals)
    }
}

pub fn generate_patch_images(
    generator: &PatchGenerator,
    count: usize,
    seed: u64,
) -> GeneratedDataset {
    let (samples, truth) = (0..count as u64)
        .into_par_iter()
        .map(|i| generator.sample_at(seed, i))
        .unzip();
    GeneratedDataset {
        params: GeneratorParams::Patch(generator.clone()),
        samples,
        truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boolean_shape_and_labels() {
        let ds = generate_boolean(2, 5, 200, 1).unwrap();
        for (s, imp) in ds.samples.iter().zip(&ds.truth) {
            assert_eq!(s.values.len(), 10);
            assert_eq!(imp.len(), 2);
            assert!(imp[0] < 5 && (5..10).contains(&imp[1]));
            assert_eq!(s.label, Some(boolean_rule(&s.values, 2, 5, 3.0)));
        }
    }

    #[test]
    fn boolean_important_mean() {
        let ds = generate_boolean(2, 5, 10_000, 2).unwrap();
        let (mut sum, mut count) = (0.0, 0.0);
        for (s, imp) in ds.samples.iter().zip(&ds.truth) {
            for &i in imp {
                sum += s.values[i];
                count += 1.0;
            }
        }
        assert!((sum / count - 4.0).abs() < 0.05);
    }

    #[test]
    fn boolean_label_rate_grows_with_shift() {
        let rate = |mean: f64| {
            let g = BooleanGenerator::new(2, 5)
                .unwrap()
                .with_important_mean(mean);
            (0..5000)
                .map(|i| g.sample_at(9, i).0.label.unwrap() as f64)
                .sum::<f64>()
                / 5000.0
        };
        assert!(rate(10.0) >= rate(4.0));
        assert!(rate(10.0) > 0.99);
    }

    #[test]
    fn rule_examples() {
        let mut x = vec![0.0; 10];
        assert_eq!(boolean_rule(&x, 2, 5, 3.0), 0);
        x[1] = 4.0;
        assert_eq!(boolean_rule(&x, 2, 5, 3.0), 0);
        x[7] = -3.0;
        assert_eq!(boolean_rule(&x, 2, 5, 3.0), 1);
    }

    #[test]
    fn geometry_indices_cover_image() {
        let g = PatchGeometry::new(3, 2, 4).unwrap();
        let mut all: Vec<usize> = (0..g.patches()).flat_map(|p| g.patch_pixels(p)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..g.dim()).collect::<Vec<_>>());
        // patch (1, 2), pixel (0, 1): row 3, column 7 of a 12-wide image
        assert_eq!(g.patch_pixels(6)[1], 3 * 12 + 7);
    }

    #[test]
    fn eta_for_four_patches() {
        assert!((default_eta(4) - 0.159_103_584_746_285_5).abs() < 1e-12);
    }

    #[test]
    fn patch_label_rate_is_half() {
        let g = PatchGenerator::new(PatchGeometry::new(7, 2, 2).unwrap(), 1.0 / 49.0).unwrap();
        let ds = generate_patch_images(&g, 10_000, 4);
        let rate = ds.samples.iter().filter(|s| s.label == Some(1)).count() as f64 / 1e4;
        assert!((rate - 0.5).abs() < 0.015, "{rate}");
    }

    #[test]
    fn noiseless_limit_copies_signal() {
        let geo = PatchGeometry::new(7, 2, 2).unwrap();
        let g = PatchGenerator::new(geo, 1e-12)
            .unwrap()
            .with_normalization(Normalization::IDENTITY)
            .with_forced_signals(vec![2])
            .unwrap();
        let (s, signals) = g.sample_at(0, 0);
        assert_eq!(signals, vec![2]);
        let x0 = cross_signal(7);
        for (k, i) in geo.patch_pixels(2).into_iter().enumerate() {
            assert!((s.values[i] - x0[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn population_normalization_standardizes() {
        let g = PatchGenerator::new(PatchGeometry::new(7, 2, 2).unwrap(), 1.0 / 49.0).unwrap();
        let ds = generate_patch_images(&g, 4000, 5);
        let all: Vec<f64> = ds
            .samples
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }
}
