//! Per-replicate records, per-cell summaries, and report serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Outcome of one method on one replicate. Metrics that do not apply to an
/// experiment are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub lambda: Option<f64>,
    pub support_size: usize,
    pub tpr: Option<f64>,
    pub fdr: Option<f64>,
    pub oracle_inclusive: Option<bool>,
    pub oir: Option<f64>,
    pub predictive_risk: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: mean(values),
            median: median(values),
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; the average of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub replications: usize,
    pub support_size: Option<Stat>,
    pub tpr: Option<Stat>,
    pub fdr: Option<Stat>,
    pub oir: Option<Stat>,
    pub inclusion_frequency: Option<f64>,
    pub predictive_risk: Option<Stat>,
    pub sigma_hat: Option<Stat>,
    pub mse: Option<Stat>,
    pub lambda: Option<Stat>,
}

impl MethodSummary {
    pub fn from_records(records: &[ReplicateRecord]) -> Self {
        let collect = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| -> Option<Stat> {
            Stat::of(&records.iter().filter_map(f).collect::<Vec<_>>())
        };
        let inclusion: Vec<f64> = records
            .iter()
            .filter_map(|r| r.oracle_inclusive.map(|b| f64::from(u8::from(b))))
            .collect();
        Self {
            replications: records.len(),
            support_size: collect(&|r| Some(r.support_size as f64)),
            tpr: collect(&|r| r.tpr),
            fdr: collect(&|r| r.fdr),
            oir: collect(&|r| r.oir),
            inclusion_frequency: (!inclusion.is_empty()).then(|| mean(&inclusion)),
            predictive_risk: collect(&|r| r.predictive_risk),
            sigma_hat: collect(&|r| r.sigma_hat),
            mse: collect(&|r| r.mse),
            lambda: collect(&|r| r.lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    /// Cell coordinates, e.g. `{"n": 40, "k": 4, "delta": 0.2, "rho": 0.1}`.
    pub params: BTreeMap<String, f64>,
    pub replications: usize,
    /// Set when the cell was not run (e.g. `k > n`).
    pub skipped: bool,
    pub methods: BTreeMap<String, MethodSummary>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub records: BTreeMap<String, Vec<ReplicateRecord>>,
}

impl CellReport {
    pub fn new(params: BTreeMap<String, f64>, records: BTreeMap<String, Vec<ReplicateRecord>>, keep: bool) -> Self {
        let replications = records.values().map(Vec::len).max().unwrap_or(0);
        let methods = records
            .iter()
            .map(|(k, v)| (k.clone(), MethodSummary::from_records(v)))
            .collect();
        Self {
            params,
            replications,
            skipped: false,
            methods,
            records: if keep { records } else { BTreeMap::new() },
        }
    }

    pub fn skipped(params: BTreeMap<String, f64>) -> Self {
        Self {
            params,
            replications: 0,
            skipped: true,
            methods: BTreeMap::new(),
            records: BTreeMap::new(),
        }
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub cells: Vec<CellReport>,
    pub metadata: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn cell(&self, pred: impl Fn(&CellReport) -> bool) -> Option<&CellReport> {
        self.cells.iter().find(|c| pred(c))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// One row per cell and method. Numbers carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let param_keys: BTreeSet<&String> = self.cells.iter().flat_map(|c| c.params.keys()).collect();
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["experiment".into()];
        header.extend(param_keys.iter().map(|k| k.to_string()));
        header.extend(["method", "replications", "skipped"].map(String::from));
        header.extend(CSV_STATS.iter().map(|s| s.to_string()));
        out.write_record(&header)?;

        for cell in &self.cells {
            let mut prefix = vec![self.experiment.clone()];
            prefix.extend(param_keys.iter().map(|k| fmt_opt(cell.params.get(*k).copied())));
            if cell.methods.is_empty() {
                let mut row = prefix.clone();
                row.extend([String::new(), "0".into(), cell.skipped.to_string()]);
                row.extend(CSV_STATS.iter().map(|_| String::new()));
                out.write_record(&row)?;
                continue;
            }
            for (name, s) in &cell.methods {
                let mut row = prefix.clone();
                row.extend([name.clone(), s.replications.to_string(), cell.skipped.to_string()]);
                let stats = [
                    s.support_size,
                    s.tpr,
                    s.fdr,
                    s.oir,
                    s.predictive_risk,
                    s.sigma_hat,
                    s.mse,
                    s.lambda,
                ];
                for st in stats {
                    row.push(fmt_opt(st.map(|v| v.mean)));
                    row.push(fmt_opt(st.map(|v| v.median)));
                }
                row.push(fmt_opt(s.inclusion_frequency));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

const CSV_STATS: [&str; 17] = [
    "support_mean",
    "support_median",
    "tpr_mean",
    "tpr_median",
    "fdr_mean",
    "fdr_median",
    "oir_mean",
    "oir_median",
    "risk_mean",
    "risk_median",
    "sigma_mean",
    "sigma_median",
    "mse_mean",
    "mse_median",
    "lambda_mean",
    "lambda_median",
    "inclusion_frequency",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Reads a report CSV back as rows of column name to raw string.
pub fn read_csv_rows<R: Read>(r: R) -> Result<Vec<BTreeMap<String, String>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            header
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn fmt_round_trips() {
        for v in [0.1, 1.0 / 3.0, 12345.678901234567, 5e-324, f64::MAX, -2.0f64.sqrt()] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
