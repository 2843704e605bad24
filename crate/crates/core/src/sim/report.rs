//! Table-shaped replication summaries and their delimited-text form.
//!
//! A report is a few `# key=value` metadata lines followed by a CSV table
//! with one row per method. Bias, RMSE, CI length and PEHE are multiplied by
//! 100; coverage and rejection rates are percentages.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSpec;
use super::ReplicationOutcome;
use crate::error::{input, Error, Result};
use crate::posterior::Method;

pub const REPORT_COLUMNS: [&str; 8] = [
    "Model",
    "Bias",
    "RMSE",
    "%Cover",
    "CI length",
    "PEHE",
    "%Rej.1",
    "%Rej.2",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub bias: f64,
    pub rmse: f64,
    pub cover: f64,
    pub ci_length: f64,
    pub pehe: f64,
    pub rej1: f64,
    pub rej2: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReplicationReport {
    /// Free-form `key=value` metadata (scenario, variant, seed, averages).
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
}

impl ReplicationReport {
    pub fn aggregate(
        spec: &ScenarioSpec,
        methods: &[Method],
        seed: u64,
        outcomes: &[ReplicationOutcome],
    ) -> Self {
        let n = outcomes.len() as f64;
        let mut meta = BTreeMap::new();
        meta.insert("scenario".into(), spec.scenario.to_string());
        meta.insert("variant".into(), spec.variant.to_string());
        meta.insert("n_trial".into(), spec.n_trial.to_string());
        meta.insert("n_external".into(), spec.n_external.to_string());
        meta.insert("reps".into(), outcomes.len().to_string());
        meta.insert("seed".into(), seed.to_string());
        meta.insert(
            "avg_cate".into(),
            (100.0 * outcomes.iter().map(|o| o.cate_true).sum::<f64>() / n).to_string(),
        );
        for s in 0..spec.n_sources() as usize {
            let avg = outcomes.iter().map(|o| o.discrepancy[s]).sum::<f64>() / n;
            meta.insert(
                format!("cate_discrepancy_s{}", s + 1),
                (100.0 * avg).to_string(),
            );
        }
        let mut failures = 0;
        let rows = methods
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let ok: Vec<_> = outcomes.iter().filter_map(|o| o.metrics[k]).collect();
                failures += outcomes.len() - ok.len();
                let c = ok.len().max(1) as f64;
                let avg = |f: &dyn Fn(&super::MetricsRow) -> f64| ok.iter().map(f).sum::<f64>() / c;
                ReportRow {
                    model: m.name().to_string(),
                    bias: 100.0 * avg(&|r| r.bias),
                    rmse: 100.0 * avg(&|r| r.rmse),
                    cover: 100.0 * avg(&|r| f64::from(u8::from(r.covered))),
                    ci_length: 100.0 * avg(&|r| r.ci_length),
                    pehe: 100.0 * avg(&|r| r.pehe),
                    rej1: 100.0 * avg(&|r| f64::from(u8::from(r.reject_test1))),
                    rej2: 100.0 * avg(&|r| f64::from(u8::from(r.reject_test2))),
                }
            })
            .collect();
        meta.insert("failed_fits".into(), failures.to_string());
        ReplicationReport { meta, rows }
    }

    pub fn row(&self, model: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

/// Fixed-width table for terminals.
impl fmt::Display for ReplicationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.meta {
            writeln!(f, "{k}: {v}")?;
        }
        writeln!(
            f,
            "{:<7}{:>9}{:>9}{:>9}{:>11}{:>9}{:>9}{:>9}",
            REPORT_COLUMNS[0],
            REPORT_COLUMNS[1],
            REPORT_COLUMNS[2],
            REPORT_COLUMNS[3],
            REPORT_COLUMNS[4],
            REPORT_COLUMNS[5],
            REPORT_COLUMNS[6],
            REPORT_COLUMNS[7]
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<7}{:>9.2}{:>9.2}{:>9.1}{:>11.2}{:>9.2}{:>9.1}{:>9.1}",
                r.model, r.bias, r.rmse, r.cover, r.ci_length, r.pehe, r.rej1, r.rej2
            )?;
        }
        Ok(())
    }
}

/// Values are written in shortest round-trip form so reading a report back
/// reproduces it exactly.
pub fn write_report<W: Write>(report: &ReplicationReport, mut w: W) -> Result<()> {
    for (k, v) in &report.meta {
        writeln!(w, "# {k}={v}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(REPORT_COLUMNS)?;
    for r in &report.rows {
        csv.write_record([
            r.model.clone(),
            r.bias.to_string(),
            r.rmse.to_string(),
            r.cover.to_string(),
            r.ci_length.to_string(),
            r.pehe.to_string(),
            r.rej1.to_string(),
            r.rej2.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_report<R: BufRead>(reader: R) -> Result<ReplicationReport> {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("malformed metadata line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != REPORT_COLUMNS {
        return input(format!("unexpected report columns {header:?}"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: REPORT_COLUMNS[j].to_string(),
                message: format!("non-numeric value `{}`", &rec[j]),
            })
        };
        rows.push(ReportRow {
            model: rec[0].to_string(),
            bias: num(1)?,
            rmse: num(2)?,
            cover: num(3)?,
            ci_length: num(4)?,
            pehe: num(5)?,
            rej1: num(6)?,
            rej2: num(7)?,
        });
    }
    Ok(ReplicationReport { meta, rows })
}
