//! Trial + external control datasets and their delimited-text form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    Continuous,
    Binary,
}

/// One row per patient. Source 0 is the current trial; sources 1.. are
/// external control data, whose rows must all be controls (arm 0).
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    pub outcome: Vec<f64>,
    pub arm: Vec<u8>,
    pub source: Vec<u32>,
    /// Row-major covariates.
    pub covariates: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
}

impl TrialDataset {
    /// Builds and validates a dataset. Covariate kinds are inferred: a column
    /// whose values are all 0 or 1 is binary.
    pub fn new(
        outcome: Vec<f64>,
        arm: Vec<u8>,
        source: Vec<u32>,
        covariates: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let q = names.len();
        let kinds = (0..q)
            .map(|j| {
                if covariates
                    .iter()
                    .all(|r| r.get(j).is_some_and(|&v| v == 0.0 || v == 1.0))
                {
                    CovariateKind::Binary
                } else {
                    CovariateKind::Continuous
                }
            })
            .collect();
        let d = TrialDataset {
            outcome,
            arm,
            source,
            covariates,
            names,
            kinds,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.outcome.len();
        if self.arm.len() != n || self.source.len() != n || self.covariates.len() != n {
            return input("outcome, arm, source and covariate rows must have equal length");
        }
        if self.kinds.len() != self.names.len() {
            return input("one kind per covariate name is required");
        }
        for (i, row) in self.covariates.iter().enumerate() {
            if row.len() != self.names.len() {
                return Err(Error::Dimension {
                    expected: self.names.len(),
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(parse_err(i, &self.names[j], "non-finite covariate"));
            }
            for (j, k) in self.kinds.iter().enumerate() {
                if *k == CovariateKind::Binary && row[j] != 0.0 && row[j] != 1.0 {
                    return Err(parse_err(
                        i,
                        &self.names[j],
                        "binary covariate must be 0 or 1",
                    ));
                }
            }
        }
        for i in 0..n {
            if !self.outcome[i].is_finite() {
                return Err(parse_err(i, "outcome", "non-finite outcome"));
            }
            if self.arm[i] > 1 {
                return Err(parse_err(i, "arm", "arm must be 0 or 1"));
            }
            if self.source[i] >= 1 && self.arm[i] != 0 {
                return Err(parse_err(
                    i,
                    "arm",
                    "external rows must be controls (arm = 0)",
                ));
            }
        }
        let trial_arm = |a: u8| (0..n).any(|i| self.source[i] == 0 && self.arm[i] == a);
        if !trial_arm(0) || !trial_arm(1) {
            return input("the trial (source 0) must contain both treated and control rows");
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    /// Distinct source labels, ascending.
    pub fn sources(&self) -> Vec<u32> {
        let mut s = self.source.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn n_external_sources(&self) -> usize {
        self.sources().iter().filter(|&&s| s > 0).count()
    }

    /// Covariates of every trial patient (both arms), the points at which
    /// the CATE is averaged.
    pub fn trial_covariates(&self) -> Vec<Vec<f64>> {
        self.select(|i| self.source[i] == 0)
            .map(|i| self.covariates[i].clone())
            .collect()
    }

    pub fn n_trial(&self) -> usize {
        self.source.iter().filter(|&&s| s == 0).count()
    }

    /// Control rows, optionally restricted to the trial.
    pub fn control_rows(&self, include_external: bool) -> Vec<usize> {
        self.select(|i| self.arm[i] == 0 && (include_external || self.source[i] == 0))
            .collect()
    }

    pub fn treated_rows(&self) -> Vec<usize> {
        self.select(|i| self.arm[i] == 1).collect()
    }

    fn select<'a>(&'a self, keep: impl Fn(usize) -> bool + 'a) -> impl Iterator<Item = usize> + 'a {
        (0..self.n_rows()).filter(move |&i| keep(i))
    }

    /// Subset of rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> TrialDataset {
        TrialDataset {
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            arm: rows.iter().map(|&i| self.arm[i]).collect(),
            source: rows.iter().map(|&i| self.source[i]).collect(),
            covariates: rows.iter().map(|&i| self.covariates[i].clone()).collect(),
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        }
    }

    /// Trial rows only (source 0).
    pub fn trial_only(&self) -> TrialDataset {
        let rows: Vec<usize> = self.select(|i| self.source[i] == 0).collect();
        self.subset(&rows)
    }

    /// Appends external control rows; their covariate layout must match.
    pub fn with_external(&self, ext: &TrialDataset) -> Result<TrialDataset> {
        if ext.names != self.names {
            return input("external covariates do not match the trial covariates");
        }
        let mut out = self.clone();
        out.outcome.extend(&ext.outcome);
        out.arm.extend(&ext.arm);
        out.source.extend(&ext.source);
        out.covariates.extend(ext.covariates.iter().cloned());
        out.validate()?;
        Ok(out)
    }
}

fn parse_err(row: usize, column: &str, message: &str) -> Error {
    Error::Parse {
        row: row + 1,
        column: column.to_string(),
        message: message.to_string(),
    }
}

/// How the outcome is formed from the input columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeColumn {
    Column(String),
    /// `minuend - subtrahend`, e.g. a baseline score minus a follow-up score.
    Difference {
        minuend: String,
        subtrahend: String,
    },
}

/// Roles of the columns of a delimited file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub outcome: OutcomeColumn,
    pub arm: String,
    /// `None`: every row belongs to the trial.
    #[serde(default)]
    pub source: Option<String>,
    /// `None`: every column not used above.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Drop rows with a missing value in a used column instead of failing.
    #[serde(default)]
    pub complete_cases: bool,
}

impl Default for DatasetSchema {
    /// The native layout: `outcome,arm,source,<covariates...>`.
    fn default() -> Self {
        DatasetSchema {
            outcome: OutcomeColumn::Column("outcome".into()),
            arm: "arm".into(),
            source: Some("source".into()),
            covariates: None,
            complete_cases: false,
        }
    }
}

impl DatasetSchema {
    /// The public headache acupuncture trial: outcome is the decrease in
    /// headache score from baseline (`pk1`) to 12 months (`pk5`); covariates
    /// are baseline score, age, sex, headache type and chronicity.
    pub fn acupuncture() -> Self {
        DatasetSchema {
            outcome: OutcomeColumn::Difference {
                minuend: "pk1".into(),
                subtrahend: "pk5".into(),
            },
            arm: "group".into(),
            source: None,
            covariates: Some(
                ["pk1", "age", "sex", "migraine", "chronicity"]
                    .map(String::from)
                    .to_vec(),
            ),
            complete_cases: true,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }

    fn used_columns(&self) -> Vec<&str> {
        let mut cols = match &self.outcome {
            OutcomeColumn::Column(c) => vec![c.as_str()],
            OutcomeColumn::Difference {
                minuend,
                subtrahend,
            } => vec![minuend.as_str(), subtrahend.as_str()],
        };
        cols.push(&self.arm);
        if let Some(s) = &self.source {
            cols.push(s);
        }
        cols
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null" | ".")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let t = cell.trim();
    match t.to_ascii_lowercase().as_str() {
        "true" | "yes" => return Ok(1.0),
        "false" | "no" => return Ok(0.0),
        _ => {}
    }
    t.parse::<f64>()
        .map_err(|_| parse_err(row, column, &format!("non-numeric value `{t}`")))
}

/// Reads a comma-delimited dataset with a header row.
pub fn read_dataset<R: Read>(reader: R, schema: &DatasetSchema) -> Result<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let used = schema.used_columns();
    let cov_names: Vec<String> = match &schema.covariates {
        Some(c) => c.clone(),
        None => header
            .iter()
            .filter(|h| !used.contains(&h.as_str()))
            .cloned()
            .collect(),
    };
    let cov_idx = cov_names
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;
    let (out_a, out_b) = match &schema.outcome {
        OutcomeColumn::Column(c) => (col(c)?, None),
        OutcomeColumn::Difference {
            minuend,
            subtrahend,
        } => (col(minuend)?, Some(col(subtrahend)?)),
    };
    let arm_idx = col(&schema.arm)?;
    let src_idx = schema.source.as_deref().map(col).transpose()?;

    let (mut outcome, mut arm, mut source, mut covariates) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let mut needed: Vec<usize> = vec![out_a, arm_idx];
        needed.extend(out_b);
        needed.extend(src_idx);
        needed.extend(&cov_idx);
        if let Some(&j) = needed.iter().find(|&&j| is_missing(cell(j))) {
            if schema.complete_cases {
                continue;
            }
            return Err(parse_err(r, &header[j], "missing value"));
        }
        let mut y = parse_cell(cell(out_a), r, &header[out_a])?;
        if let Some(b) = out_b {
            y -= parse_cell(cell(b), r, &header[b])?;
        }
        let a = parse_cell(cell(arm_idx), r, &header[arm_idx])?;
        if a != 0.0 && a != 1.0 {
            return Err(parse_err(r, &header[arm_idx], "arm must be 0 or 1"));
        }
        let s = match src_idx {
            Some(j) => {
                let v = parse_cell(cell(j), r, &header[j])?;
                if v < 0.0 || v.fract() != 0.0 || v > 63.0 {
                    return Err(parse_err(
                        r,
                        &header[j],
                        "source must be an integer in 0..=63",
                    ));
                }
                v as u32
            }
            None => 0,
        };
        let x = cov_idx
            .iter()
            .map(|&j| parse_cell(cell(j), r, &header[j]))
            .collect::<Result<Vec<_>>>()?;
        outcome.push(y);
        arm.push(a as u8);
        source.push(s);
        covariates.push(x);
    }
    TrialDataset::new(outcome, arm, source, covariates, cov_names)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<TrialDataset> {
    read_dataset(std::fs::File::open(path)?, schema)
}

/// Writes the native layout. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_dataset_to<W: Write>(data: &TrialDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["outcome".to_string(), "arm".into(), "source".into()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec = vec![
            data.outcome[i].to_string(),
            data.arm[i].to_string(),
            data.source[i].to_string(),
        ];
        rec.extend(data.covariates[i].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(data: &TrialDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(data, std::fs::File::create(path)?)
}

/// Per-column means over rows of `data`, keyed by covariate name.
pub fn covariate_means(data: &TrialDataset, rows: &[usize]) -> BTreeMap<String, f64> {
    data.names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let s: f64 = rows.iter().map(|&i| data.covariates[i][j]).sum();
            (name.clone(), s / rows.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str =
        "outcome,arm,source,age,female\n1.5,1,0,40,1\n0.5,0,0,50,0\n0.25,0,1,61.5,1\n";

    #[test]
    fn reads_native_layout() {
        let d = read_dataset(SMALL.as_bytes(), &DatasetSchema::default()).unwrap();
        assert_eq!(d.names, ["age", "female"]);
        assert_eq!(d.kinds, [CovariateKind::Continuous, CovariateKind::Binary]);
        assert_eq!(d.source, [0, 0, 1]);
        assert_eq!(d.trial_covariates().len(), 2);
        assert_eq!(d.control_rows(true), [1, 2]);
        assert_eq!(d.control_rows(false), [1]);
    }

    #[test]
    fn round_trip_is_identity() {
        let d = read_dataset(SMALL.as_bytes(), &DatasetSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &DatasetSchema::default()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn external_treated_row_is_rejected() {
        let bad = "outcome,arm,source,x\n1,1,0,0.1\n0,0,0,0.2\n2,1,1,0.3\n";
        let err = read_dataset(bad.as_bytes(), &DatasetSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let bad = "outcome,arm,source,x\n1,1,0,abc\n0,0,0,0.2\n";
        match read_dataset(bad.as_bytes(), &DatasetSchema::default()).unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (1, "x")),
            e => panic!("{e}"),
        }
        let missing = "outcome,arm,x\n1,1,0\n";
        assert!(matches!(
            read_dataset(missing.as_bytes(), &DatasetSchema::default()),
            Err(Error::MissingColumn(c)) if c == "source"
        ));
        let gap = "outcome,arm,source,x\n1,1,0,\n0,0,0,0.2\n";
        assert!(read_dataset(gap.as_bytes(), &DatasetSchema::default()).is_err());
    }

    #[test]
    fn difference_outcome_and_complete_cases() {
        let raw = "id,group,pk1,pk5,age,sex,migraine,chronicity\n\
                   1,1,30,20,45,1,1,10\n2,0,25,24,50,0,1,20\n3,1,40,NA,33,1,0,5\n4,0,22,20,61,0,0,12\n";
        let d = read_dataset(raw.as_bytes(), &DatasetSchema::acupuncture()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.outcome, [10.0, 1.0, 2.0]);
        assert_eq!(d.names, ["pk1", "age", "sex", "migraine", "chronicity"]);
        assert!(d.source.iter().all(|&s| s == 0));
    }

    #[test]
    fn trial_needs_both_arms() {
        let raw = "outcome,arm,source,x\n1,0,0,0.1\n0,0,1,0.2\n";
        assert!(read_dataset(raw.as_bytes(), &DatasetSchema::default()).is_err());
    }
}
