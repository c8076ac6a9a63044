//! Desk-scale reproductions of the three synthetic experiments.
//!
//! Each run writes `report.json`, one plot-ready CSV and
//! `config.snapshot.json` into its output directory. Outputs depend only on
//! the configuration (including its seed), never on the thread count.

mod boolean;
mod power;
mod quadrant;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use boolean::{run_boolean, BooleanConfig, BooleanFeature, BooleanMaskingMode, BooleanResult};
pub use power::{
    monotone_within_bands, run_power_study, ModelKind, Monotonicity, PowerCell, PowerConfig,
    PowerPoint, PowerResult,
};
pub use quadrant::{
    run_quadrant, HrtQuadrant, ImageKind, QuadrantConfig, QuadrantImage, QuadrantResult,
};

use crate::error::{Error, Result};
use crate::report::{Invocation, Payload, ReportDocument};

/// Tags for seeds derived inside experiments.
pub(crate) mod stage {
    pub const SAMPLES: u64 = 1;
    pub const TESTS: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const TEST_SET: u64 = 4;
    pub const CASES: u64 = 5;
    pub const INIT: u64 = 6;
    pub const VALIDATION: u64 = 7;
    pub const PLACEMENT: u64 = 8;
}

/// Empirical distribution function of values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfSeries {
    pub label: String,
    /// Sorted values.
    pub values: Vec<f64>,
    /// `fractions[i]` is the share of values at most `values[i]`.
    pub fractions: Vec<f64>,
}

impl EcdfSeries {
    pub fn new(label: impl Into<String>, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mut fractions = vec![0.0; values.len()];
        // ties share the fraction of their last occurrence
        let mut i = values.len();
        while i > 0 {
            let v = values[i - 1];
            let f = i as f64 / n;
            while i > 0 && values[i - 1] == v {
                fractions[i - 1] = f;
                i -= 1;
            }
        }
        EcdfSeries {
            label: label.into(),
            values,
            fractions,
        }
    }

    /// Share of values at most `x`.
    pub fn at(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len().max(1) as f64
    }

    pub fn is_valid(&self) -> bool {
        self.fractions.windows(2).all(|w| w[0] <= w[1])
            && self.fractions.last().is_none_or(|&f| f == 1.0)
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Experiment configurations, tagged by `experiment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Boolean(BooleanConfig),
    ImagePower(PowerConfig),
    Quadrant(QuadrantConfig),
}

impl ExperimentConfig {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentConfig::Boolean(_) => "boolean",
            ExperimentConfig::ImagePower(_) => "image-power",
            ExperimentConfig::Quadrant(_) => "quadrant",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Boolean(c) => c.seed,
            ExperimentConfig::ImagePower(c) => c.seed,
            ExperimentConfig::Quadrant(c) => c.seed,
        }
    }

    /// Runs the experiment and writes its files into `out_dir`.
    pub fn run(&self, out_dir: &Path, timestamp: Option<String>) -> Result<ReportDocument> {
        let (payload, csv_name, csv) = match self {
            ExperimentConfig::Boolean(c) => {
                let r = run_boolean(c)?;
                let csv = r.ecdf_csv();
                (Payload::Boolean(Box::new(r)), "ecdf.csv", csv)
            }
            ExperimentConfig::ImagePower(c) => {
                let r = run_power_study(c)?;
                let csv = r.power_csv();
                (Payload::ImagePower(Box::new(r)), "power.csv", csv)
            }
            ExperimentConfig::Quadrant(c) => {
                let r = run_quadrant(c)?;
                let csv = r.regions_csv();
                (Payload::Quadrant(Box::new(r)), "regions.csv", csv)
            }
        };
        let config = serde_json::to_value(self)?;
        let doc = ReportDocument::new(
            Invocation {
                command: format!("experiment {}", self.id()),
                config: config.clone(),
                seed: self.seed(),
                timestamp,
            },
            payload,
        );
        fs::create_dir_all(out_dir)?;
        doc.write(&out_dir.join("report.json"))?;
        fs::write(out_dir.join(csv_name), csv)?;
        let mut snapshot = serde_json::to_string_pretty(&config)?;
        snapshot.push('\n');
        fs::write(out_dir.join("config.snapshot.json"), snapshot)?;
        Ok(doc)
    }

    /// Parses a configuration; unknown experiments and missing keys are
    /// reported by name.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Writes rows of displayable cells as CSV text.
pub(crate) fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_handles_ties() {
        let e = EcdfSeries::new("p", vec![0.5, 0.1, 0.5, 1.0]);
        assert_eq!(e.values, vec![0.1, 0.5, 0.5, 1.0]);
        assert_eq!(e.fractions, vec![0.25, 0.75, 0.75, 1.0]);
        assert_eq!(e.at(0.5), 0.75);
        assert_eq!(e.at(0.05), 0.0);
        assert!(e.is_valid());
    }

    #[test]
    fn missing_seed_is_named() {
        let err =
            ExperimentConfig::from_value(serde_json::json!({"experiment": "boolean"})).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }
}
