//! JSON specifications of predictors and samplers, as accepted by the CLI.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::masking::{
    boolean_sampler, make_gaussian_conditional, make_mean_imputation, BooleanMasking,
    ConditionalSampler, Marginal, MeanImputation, PatchGenerator, PatchGeometry, PatchMasking,
    PatchSampler, ProductMarginal, Sample,
};
use crate::predictors::{
    boolean_truth, threshold01, Cnn, ConstantPredictor, ExternalPredictor, Fcn, Predictor,
    DEFAULT_MAX_BATCH,
};

fn default_threshold() -> f64 {
    3.0
}
fn default_tau() -> f64 {
    0.5
}
fn default_timeout() -> f64 {
    30.0
}
fn default_max_batch() -> usize {
    DEFAULT_MAX_BATCH
}
fn default_important_mean() -> f64 {
    4.0
}
fn default_boolean_masking() -> BooleanMasking {
    BooleanMasking::Unimportant
}
fn default_patch_masking() -> PatchMasking {
    PatchMasking::Unimportant
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    /// The Boolean-block rule `AND_i OR_j |x_ij| >= threshold`.
    BooleanTruth {
        k: usize,
        n: usize,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    Constant {
        dim: usize,
        value: f64,
    },
    /// A CNN saved as JSON (see the `train` command).
    Cnn {
        path: PathBuf,
    },
    Fcn {
        path: PathBuf,
    },
    /// A child process speaking the NDJSON protocol.
    External {
        command: String,
        dim: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_max_batch")]
        max_batch: usize,
    },
    /// `1[f(x) >= tau]`.
    Threshold {
        inner: Box<PredictorSpec>,
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

fn read_model<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read model `{}`: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

impl PredictorSpec {
    pub fn build(&self) -> Result<Arc<dyn Predictor>> {
        Ok(match self {
            PredictorSpec::BooleanTruth { k, n, threshold } => {
                Arc::new(boolean_truth(*k, *n, *threshold)?)
            }
            PredictorSpec::Constant { dim, value } => {
                Arc::new(ConstantPredictor::new(*dim, *value)?)
            }
            PredictorSpec::Cnn { path } => Arc::new(read_model::<Cnn>(path)?),
            PredictorSpec::Fcn { path } => Arc::new(read_model::<Fcn>(path)?),
            PredictorSpec::External {
                command,
                dim,
                timeout_secs,
                max_batch,
            } => Arc::new(ExternalPredictor::spawn(
                command,
                *dim,
                *timeout_secs,
                *max_batch,
            )?),
            PredictorSpec::Threshold { inner, tau } => Arc::new(threshold01(inner.build()?, *tau)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Exact conditionals of a multivariate normal.
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Independent coordinates with the given marginals.
    Product { marginals: Vec<Marginal> },
    /// Boolean-block data.
    Boolean {
        k: usize,
        n: usize,
        #[serde(default = "default_important_mean")]
        important_mean: f64,
        #[serde(default = "default_boolean_masking")]
        masking: BooleanMasking,
    },
    /// Hidden coordinates set to `mean`, or to the column means of the
    /// reference data when `mean` is absent.
    MeanImputation {
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
    /// Patch images; masks must hide whole patches. Pixels are normalized with
    /// the population constants at `train_sigma2` (default `sigma2`).
    Patch {
        d: usize,
        r: usize,
        s: usize,
        sigma2: f64,
        #[serde(default)]
        train_sigma2: Option<f64>,
        #[serde(default = "default_patch_masking")]
        mode: PatchMasking,
    },
}

impl SamplerSpec {
    /// `reference` supplies the rows for mean imputation without an explicit
    /// mean.
    pub fn build(&self, reference: Option<&[Sample]>) -> Result<Arc<dyn ConditionalSampler>> {
        Ok(match self {
            SamplerSpec::Gaussian { mean, covariance } => {
                Arc::new(make_gaussian_conditional(mean.clone(), covariance.clone())?)
            }
            SamplerSpec::Product { marginals } => {
                Arc::new(ProductMarginal::new(marginals.clone())?)
            }
            SamplerSpec::Boolean {
                k,
                n,
                important_mean,
                masking,
            } => Arc::new(boolean_sampler(*k, *n, *important_mean, masking)?),
            SamplerSpec::MeanImputation { mean: Some(mean) } => {
                Arc::new(make_mean_imputation(mean.clone()))
            }
            SamplerSpec::MeanImputation { mean: None } => {
                let rows = reference
                    .ok_or_else(|| domain("mean imputation without `mean` needs reference data"))?;
                Arc::new(MeanImputation::from_rows(
                    rows.iter().map(|s| s.values.as_slice()),
                )?)
            }
            SamplerSpec::Patch {
                d,
                r,
                s,
                sigma2,
                train_sigma2,
                mode,
            } => {
                let geometry = PatchGeometry::new(*d, *r, *s)?;
                let generator = PatchGenerator::new(geometry, train_sigma2.unwrap_or(*sigma2))?
                    .with_sigma2(*sigma2)?;
                Arc::new(PatchSampler::from_generator(&generator, *mode))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::Coalition;
    use crate::masking::Masker;
    use crate::rng::stream;

    #[test]
    fn specs_parse_from_json() {
        let p: PredictorSpec = serde_json::from_str(
            r#"{"kind": "threshold", "inner": {"kind": "boolean_truth", "k": 2, "n": 5}}"#,
        )
        .unwrap();
        let f = p.build().unwrap();
        assert_eq!(f.dim(), 10);
        let mut x = vec![0.0; 10];
        x[1] = 5.0;
        x[7] = -3.5;
        assert_eq!(f.predict(&x).unwrap(), 1.0);

        let s: SamplerSpec = serde_json::from_str(
            r#"{"kind": "boolean", "k": 2, "n": 5, "masking": {"mode": "mixture"}}"#,
        )
        .unwrap();
        assert_eq!(s.build(None).unwrap().dim(), 10);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<PredictorSpec>(
            r#"{"kind": "constant", "dim": 2, "value": 0.5, "extra": 1}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mean_imputation_from_reference_rows() {
        let spec = SamplerSpec::MeanImputation { mean: None };
        assert!(spec.build(None).is_err());
        let rows = [Sample::new(vec![0.0, 2.0]), Sample::new(vec![1.0, 4.0])];
        let sampler = spec.build(Some(&rows)).unwrap();
        let masker = Masker::singletons(sampler).unwrap();
        let mut out = [0.0; 2];
        let c = Coalition::from_members(2, [1]).unwrap();
        masker
            .condition(&[9.0, 9.0], c)
            .unwrap()
            .fill(&mut stream(0, &[]), &mut out);
        assert_eq!(out, [0.5, 9.0]);
    }

    #[test]
    fn missing_model_file_is_a_config_error() {
        let spec = PredictorSpec::Cnn {
            path: "/nonexistent/model.json".into(),
        };
        assert!(matches!(spec.build(), Err(Error::Config(_))));
    }
}
