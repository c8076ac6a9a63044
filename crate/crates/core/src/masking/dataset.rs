use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generators::{BooleanGenerator, PatchGenerator};
use crate::error::{domain, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Self {
        Sample {
            values,
            label: None,
        }
    }

    pub fn labeled(values: Vec<f64>, label: u8) -> Self {
        Sample {
            values,
            label: Some(label),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorParams {
    Boolean(BooleanGenerator),
    Patch(PatchGenerator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub params: GeneratorParams,
    pub samples: Vec<Sample>,
    /// Important indices per sample: one coordinate per block for Boolean
    /// data, the signal patches for patch images.
    pub truth: Vec<Vec<usize>>,
}

/// Companion of a generated CSV holding what the CSV cannot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSideFile {
    pub params: GeneratorParams,
    pub truth: Vec<Vec<usize>>,
}

impl GeneratedDataset {
    /// Side file path for a dataset CSV: `data.csv` -> `data.meta.json`.
    pub fn side_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }

    /// Writes the CSV and its side file.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        write_csv(csv_path, &self.samples)?;
        let side = DatasetSideFile {
            params: self.params.clone(),
            truth: self.truth.clone(),
        };
        let mut w = BufWriter::new(File::create(Self::side_path(csv_path))?);
        serde_json::to_writer_pretty(&mut w, &side)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let samples = read_csv(csv_path)?;
        let side: DatasetSideFile =
            serde_json::from_reader(BufReader::new(File::open(Self::side_path(csv_path))?))?;
        if side.truth.len() != samples.len() {
            return Err(domain("side file and CSV disagree on the sample count"));
        }
        Ok(GeneratedDataset {
            params: side.params,
            samples,
            truth: side.truth,
        })
    }
}

/// Writes `f0,...,f{n-1},label`. Unlabeled samples leave the label empty.
pub fn write_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let n = samples.first().map_or(0, Sample::dim);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for s in samples {
        if s.dim() != n {
            return Err(domain("samples of unequal length"));
        }
        let mut rec: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
        rec.push(s.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let n = header.len() - usize::from(has_label);
    for (i, h) in header.iter().take(n).enumerate() {
        if h != format!("f{i}") {
            return Err(domain(format!(
                "unexpected CSV column `{h}`, expected `f{i}`"
            )));
        }
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| domain(format!("row {row}: `{}` is not a number", &rec[i])))
        };
        let values = (0..n).map(parse).collect::<Result<Vec<_>>>()?;
        let label = if has_label && !rec[n].trim().is_empty() {
            match rec[n].trim() {
                "0" => Some(0),
                "1" => Some(1),
                other => {
                    return Err(Error::Domain(format!(
                        "row {row}: label `{other}` is not 0 or 1"
                    )))
                }
            }
        } else {
            None
        };
        out.push(Sample { values, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::generate_boolean;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let samples = vec![
            Sample::labeled(vec![0.1, -2.5e-7, 3.0], 1),
            Sample::new(vec![f64::MIN_POSITIVE, 1.0 / 3.0, 0.0]),
        ];
        write_csv(&path, &samples).unwrap();
        assert_eq!(read_csv(&path).unwrap(), samples);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f0,f1,f2,label\n"));
    }

    #[test]
    fn generated_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let ds = generate_boolean(2, 3, 20, 11).unwrap();
        ds.save(&path).unwrap();
        assert_eq!(GeneratedDataset::load(&path).unwrap(), ds);
    }

    #[test]
    fn bad_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "f0,label\n1.0,2\n").unwrap();
        assert!(read_csv(&path).is_err());
    }
}
