//! Versioned JSON report documents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::GlobalTest;
use crate::error::{Error, Result};
use crate::experiments::{BooleanResult, PowerResult, QuadrantResult};
use crate::explain::{FeatureReport, RegionReport};
use crate::games::{AxiomReport, ShapleyResult};
use crate::testing::{GammaEstimate, TestOutcome};

pub const SCHEMA: &str = "shaplit-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    /// The fully resolved configuration.
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub players: usize,
    /// Draws per value of the model game (1 for deterministic masking).
    pub draws: usize,
    pub features: Vec<ShapleyResult>,
    /// Present when every player was explained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axioms: Option<AxiomReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub feature: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalition: Option<Vec<usize>>,
    pub outcome: TestOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub tests: Vec<GlobalTest>,
    /// `weighted_p <= 1 - phi` for every feature.
    pub chain_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "kebab-case")]
pub enum Payload {
    Shapley(ShapleyReport),
    Tests(Vec<TestReport>),
    Global(GlobalReport),
    Explain(Vec<FeatureReport>),
    Regions(Vec<RegionReport>),
    Boolean(Box<BooleanResult>),
    ImagePower(Box<PowerResult>),
    Quadrant(Box<QuadrantResult>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub invocation: Invocation,
    pub payload: Payload,
}

impl ReportDocument {
    pub fn new(invocation: Invocation, payload: Payload) -> Self {
        ReportDocument {
            schema: SCHEMA.to_owned(),
            invocation,
            payload,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(SCHEMA) => {}
            Some(other) => {
                return Err(Error::Config(format!(
                    "report schema `{other}` is not supported (expected `{SCHEMA}`)"
                )))
            }
            None => return Err(Error::Config("report has no `schema` field".into())),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{PValueMode, TestStatistic};

    fn doc() -> ReportDocument {
        let outcome = TestOutcome {
            statistic: TestStatistic::Identity,
            t: 0.1 + 0.2,
            null_stats: vec![1.0 / 3.0, 2e-300, 0.7],
            p_hat: 0.5,
            k: 3,
            l: 1,
            seed: u64::MAX,
            mode: PValueMode::Randomized,
        };
        ReportDocument::new(
            Invocation {
                command: "shaplit".into(),
                config: serde_json::json!({"k": 3}),
                seed: u64::MAX,
                timestamp: None,
            },
            Payload::Tests(vec![TestReport {
                feature: 1,
                coalition: Some(vec![0, 2]),
                outcome,
                gamma: None,
            }]),
        )
    }

    #[test]
    fn round_trip_is_lossless() {
        let d = doc();
        let text = d.to_json().unwrap();
        assert_eq!(ReportDocument::from_json(&text).unwrap(), d);
        assert!(text.contains("\"schema\": \"shaplit-report/1\""));
    }

    #[test]
    fn schema_is_checked() {
        let text = doc()
            .to_json()
            .unwrap()
            .replace("shaplit-report/1", "shaplit-report/9");
        assert!(matches!(
            ReportDocument::from_json(&text),
            Err(Error::Config(_))
        ));
    }
}
