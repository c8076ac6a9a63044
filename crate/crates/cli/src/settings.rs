//! Configuration resolution (JSON file overlaid by flags), inputs and errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use shaplit_core::masking::{read_csv, Sample};
use shaplit_core::report::{Invocation, ReportDocument};
use shaplit_core::Error;

/// Flags whose value is JSON text, or `@path` to a JSON file.
const JSON_FLAGS: [&str; 4] = ["predictor", "sampler", "groups", "rule"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => ExitCode::from(2),
            CliError::Core(Error::Predictor(_)) => ExitCode::from(4),
            CliError::Core(_) => ExitCode::from(3),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub timestamp: bool,
    pub out: Option<PathBuf>,
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("`{}` is not valid JSON: {e}", path.display())))
}

fn json_flag(key: &str, text: &str) -> CliResult<Value> {
    match text.strip_prefix('@') {
        Some(path) => read_json(Path::new(path)),
        None => {
            serde_json::from_str(text).map_err(|e| usage(format!("--{key} is not valid JSON: {e}")))
        }
    }
}

/// The config file (if any) as an object.
pub fn config_object(common: &Common) -> CliResult<Map<String, Value>> {
    match &common.config {
        None => Ok(Map::new()),
        Some(path) => match read_json(path)? {
            Value::Object(m) => Ok(m),
            _ => Err(usage(format!(
                "`{}` must hold a JSON object",
                path.display()
            ))),
        },
    }
}

/// Overlays the set flags on the config file and deserializes the result.
/// Returns the typed config and its JSON form with every default filled in.
pub fn resolve<T: DeserializeOwned + Serialize>(
    common: &Common,
    flags: &impl Serialize,
) -> CliResult<(T, Value)> {
    let mut merged = config_object(common)?;
    let Value::Object(set) = serde_json::to_value(flags).map_err(|e| usage(e.to_string()))? else {
        return Err(usage("flags did not serialize to an object"));
    };
    for (k, v) in set {
        match v {
            Value::Null => {}
            Value::String(s) if JSON_FLAGS.contains(&k.as_str()) => {
                let parsed = json_flag(&k, &s)?;
                merged.insert(k, parsed);
            }
            v => {
                merged.insert(k, v);
            }
        }
    }
    if let Some(seed) = common.seed {
        merged.insert("seed".into(), seed.into());
    }
    let typed: T = serde_json::from_value(Value::Object(merged))
        .map_err(|e| usage(format!("invalid configuration: {e}")))?;
    let resolved = serde_json::to_value(&typed).map_err(|e| usage(e.to_string()))?;
    Ok((typed, resolved))
}

pub fn invocation(command: &str, config: Value, seed: u64, common: &Common) -> Invocation {
    Invocation {
        command: command.to_owned(),
        config,
        seed,
        timestamp: common.timestamp.then(timestamp_now),
    }
}

/// Seconds since the Unix epoch.
pub fn timestamp_now() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Writes the report to `--out`, or to standard output.
pub fn emit(doc: &ReportDocument, common: &Common) -> CliResult<()> {
    match &common.out {
        Some(path) => doc.write(path)?,
        None => print!("{}", doc.to_json()?),
    }
    Ok(())
}

pub fn load_rows(path: &Path) -> CliResult<Vec<Sample>> {
    let rows = read_csv(path)?;
    if rows.is_empty() {
        return Err(Error::Domain(format!("`{}` has no rows", path.display())).into());
    }
    Ok(rows)
}

/// The sample to explain: `x` if given, else row `row` of `data`. Also
/// returns the dataset rows, when there are any.
pub fn load_point(
    data: &Option<PathBuf>,
    row: usize,
    x: &Option<Vec<f64>>,
) -> CliResult<(Vec<f64>, Option<Vec<Sample>>)> {
    let rows = data.as_deref().map(load_rows).transpose()?;
    let point = match (x, &rows) {
        (Some(x), _) => x.clone(),
        (None, Some(rows)) => rows
            .get(row)
            .ok_or_else(|| Error::Domain(format!("row {row} out of range ({} rows)", rows.len())))?
            .values
            .clone(),
        (None, None) => return Err(usage("give the sample with --x or --data/--row")),
    };
    Ok((point, rows))
}

/// Flat row-major matrix and labels; every row must be labeled.
pub fn labeled_matrix(rows: &[Sample]) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut flat = Vec::with_capacity(rows.len() * rows[0].dim());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, s) in rows.iter().enumerate() {
        let y = s
            .label
            .ok_or_else(|| Error::Domain(format!("row {i} has no label")))?;
        flat.extend_from_slice(&s.values);
        labels.push(f64::from(y));
    }
    Ok((flat, labels))
}
