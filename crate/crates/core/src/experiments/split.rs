//! Repeated train/test splits of a tabular dataset.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CellReport, ExperimentReport, ReplicateRecord};
use super::{apply_rules, check_replications, check_rules, RuleSettings};
use crate::design::{standardize, DesignMatrix, ResponseVector, StandardizeOptions};
use crate::error::{Error, Result};
use crate::io::TabularDataset;
use crate::lasso::LassoOptions;
use crate::metrics::predictive_risk;
use crate::rng::{self, tag};
use crate::selectors::Rule;
use crate::thresholds::{qut_with_options, QutOptions};
use crate::variance::{rcv_variance, RcvOptions, RCV_MIN_ROWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitEvalConfig {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub rules: Vec<Rule>,
    pub settings: RuleSettings,
    pub rcv: RcvOptions,
    pub keep_records: bool,
}

impl Default for SplitEvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            repetitions: 100,
            seed: 1,
            rules: Rule::ALL.to_vec(),
            settings: RuleSettings::default(),
            rcv: RcvOptions::default(),
            keep_records: false,
        }
    }
}

impl SplitEvalConfig {
    pub fn train_size(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).round() as usize
    }
}

pub fn run_split_eval(data: &TabularDataset, cfg: &SplitEvalConfig) -> Result<ExperimentReport> {
    check_rules(&cfg.rules)?;
    check_replications(cfg.repetitions)?;
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must lie in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    let n = data.n();
    let n_train = cfg.train_size(n);
    if n_train < RCV_MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "{n_train} training rows; at least {RCV_MIN_ROWS} are needed"
        )));
    }
    if n_train >= n {
        return Err(Error::InsufficientData("the split leaves no test rows".into()));
    }
    let started = Instant::now();
    let results: Vec<Result<Vec<(String, ReplicateRecord)>>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| repetition(data, cfg, n_train, rep))
        .collect();
    let mut records: BTreeMap<String, Vec<ReplicateRecord>> = BTreeMap::new();
    for r in results {
        for (m, rec) in r? {
            records.entry(m).or_default().push(rec);
        }
    }
    let mut params = BTreeMap::new();
    params.insert("n".to_string(), n as f64);
    params.insert("p".to_string(), data.p() as f64);
    params.insert("n_train".to_string(), n_train as f64);
    params.insert("train_fraction".to_string(), cfg.train_fraction);
    let mut metadata = BTreeMap::new();
    metadata.insert("runtime_seconds".into(), started.elapsed().as_secs_f64());
    Ok(ExperimentReport {
        experiment: "split-eval".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        cells: vec![CellReport::new(params, records, cfg.keep_records)],
        metadata,
    })
}

fn rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(ndarray::Axis(0), idx)
}

fn repetition(
    data: &TabularDataset,
    cfg: &SplitEvalConfig,
    n_train: usize,
    rep: usize,
) -> Result<Vec<(String, ReplicateRecord)>> {
    let r = rep as u64;
    let perm = rng::permutation(&mut rng::substream(cfg.seed, &[tag::SPLIT, r]), data.n());
    let (train, test) = perm.split_at(n_train);

    // covariates and response are centered with training statistics only
    let x = standardize(&rows(&data.x, train), StandardizeOptions { center: true })?;
    let x_test = DesignMatrix::new(x.transform(&rows(&data.x, test))?)?;
    let y_train = data.y.select(ndarray::Axis(0), train);
    let y_mean = y_train.mean().unwrap_or(0.0);
    let y = ResponseVector::new(y_train - y_mean)?;
    let y_test = ResponseVector::new(data.y.select(ndarray::Axis(0), test) - y_mean)?;

    let opts = LassoOptions::default();
    let sigma_hat = if cfg.rules.iter().any(Rule::needs_sigma) {
        Some(rcv_variance(&x, &y, rng::substream_seed(cfg.seed, &[tag::RCV, r]), &cfg.rcv, &opts)?.sigma())
    } else {
        None
    };
    let threshold = if cfg.rules.contains(&Rule::Qut) {
        Some(qut_with_options(
            &x,
            1.0,
            &QutOptions {
                m: cfg.settings.qut_m,
                seed: rng::substream_seed(cfg.seed, &[tag::QUT, r]),
                ..Default::default()
            },
        )?)
    } else {
        None
    };
    let cv_seed = rng::substream_seed(cfg.seed, &[tag::FOLDS, r]);
    let selections = apply_rules(
        &x,
        &y,
        &cfg.rules,
        sigma_hat,
        threshold.as_ref(),
        cv_seed,
        &cfg.settings,
    )?;
    selections
        .into_iter()
        .map(|s| {
            Ok((
                s.rule.to_string(),
                ReplicateRecord {
                    replicate: rep,
                    lambda: Some(s.lambda),
                    support_size: s.support.len(),
                    predictive_risk: Some(predictive_risk(&s.beta_refit, &x_test, &y_test)?),
                    sigma_hat: s.sigma_used,
                    ..Default::default()
                },
            ))
        })
        .collect()
}

/// Gaussian covariates with `k` planted coefficients of size `amplitude`
/// and unit noise, shaped like a wide real dataset (e.g. `n = 71`,
/// `p = 4088`).
pub fn synthetic_dataset(n: usize, p: usize, k: usize, amplitude: f64, seed: u64) -> Result<TabularDataset> {
    if k > p {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds p = {p}")));
    }
    let x = rng::normal_matrix(&mut rng::substream(seed, &[tag::DESIGN]), n, p);
    let mut beta = Array1::zeros(p);
    beta.slice_mut(ndarray::s![..k]).fill(amplitude);
    let y = x.dot(&beta) + rng::normal_vector(&mut rng::substream(seed, &[tag::NOISE]), n);
    let names = (0..p).map(|j| format!("x{j}")).collect();
    TabularDataset::new(names, "y".into(), x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_training_rows() {
        let data = synthetic_dataset(30, 10, 2, 1.0, 1).unwrap();
        let cfg = SplitEvalConfig {
            train_fraction: 0.5,
            ..Default::default()
        };
        assert!(matches!(run_split_eval(&data, &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn single_repetition() {
        let data = synthetic_dataset(50, 20, 3, 2.0, 4).unwrap();
        let cfg = SplitEvalConfig {
            train_fraction: 0.6,
            repetitions: 1,
            settings: RuleSettings {
                qut_m: 100,
                grid_size: 30,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = run_split_eval(&data, &cfg).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.replications, 1);
        assert_eq!(cell.methods.len(), 5);
        for m in cell.methods.values() {
            assert!(m.predictive_risk.unwrap().mean.is_finite());
        }
    }
}
