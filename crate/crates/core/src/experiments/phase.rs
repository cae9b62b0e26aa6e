//! Oracle-inclusion phase transition on Gaussian designs.
//!
//! Cells are indexed by the undersampling factor `delta = N / P` and the
//! sparsity factor `rho = k / N`. In each replicate the `k` leading
//! coefficients equal `amplitude * sigma` and the rest are zero.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CellReport, ExperimentReport, ReplicateRecord};
use super::{apply_rules, check_replications, check_rules, RuleSettings};
use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::LassoOptions;
use crate::metrics::{oir, oracle_inclusive, smallest_oracle_support, tpr_fdr};
use crate::rng::{self, tag};
use crate::selectors::Rule;
use crate::thresholds::{qut_with_options, QutOptions};

/// Method name under which the oracle scan is reported.
pub const ORACLE: &str = "oracle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseTransitionConfig {
    pub p: usize,
    pub n_grid: Vec<usize>,
    /// Target sparsity factors; `k = max(1, round(rho N))`.
    pub rho_grid: Vec<f64>,
    /// Run every `k` in `1..=N` instead of `rho_grid`.
    pub full_k: bool,
    /// Nonzero coefficient value in multiples of `sigma`.
    pub amplitude: f64,
    pub sigma: f64,
    pub replications: usize,
    pub seed: u64,
    pub rules: Vec<Rule>,
    pub oracle_grid_size: usize,
    pub oracle_grid_ratio: f64,
    pub settings: RuleSettings,
    pub keep_records: bool,
}

impl Default for PhaseTransitionConfig {
    fn default() -> Self {
        Self {
            p: 200,
            n_grid: (1..=9).map(|i| 20 * i).collect(),
            rho_grid: vec![0.025, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0],
            full_k: false,
            amplitude: 10.0,
            sigma: 1.0,
            replications: 50,
            seed: 1,
            rules: vec![Rule::Qut],
            oracle_grid_size: 200,
            oracle_grid_ratio: 1e-4,
            settings: RuleSettings::default(),
            keep_records: false,
        }
    }
}

impl PhaseTransitionConfig {
    /// The full-scale layout: `P = 1600` and nine `N` from 160 to 1440.
    pub fn full_scale() -> Self {
        Self {
            p: 1600,
            n_grid: (1..=9).map(|i| 160 * i).collect(),
            replications: 100,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        check_rules(&self.rules)?;
        check_replications(self.replications)?;
        if self.p == 0 || self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidParameter("p and every n must be positive".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n > self.p) {
            return Err(Error::InvalidParameter(format!("n = {n} exceeds p = {}", self.p)));
        }
        if !self.full_k && (self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(*r > 0.0))) {
            return Err(Error::InvalidParameter("rho grid must be nonempty and positive".into()));
        }
        if !(self.amplitude > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("amplitude and sigma must be positive".into()));
        }
        Ok(())
    }

    /// `(rho_target, k)` pairs for sample size `n`.
    pub fn k_values(&self, n: usize) -> Vec<(f64, usize)> {
        if self.full_k {
            (1..=n).map(|k| (k as f64 / n as f64, k)).collect()
        } else {
            self.rho_grid
                .iter()
                .map(|&rho| (rho, ((rho * n as f64).round() as usize).max(1)))
                .collect()
        }
    }
}

struct Cell {
    n: usize,
    k: usize,
    params: BTreeMap<String, f64>,
}

pub fn run_phase_transition(cfg: &PhaseTransitionConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for (rho, k) in cfg.k_values(n) {
            let mut params = BTreeMap::new();
            params.insert("n".to_string(), n as f64);
            params.insert("p".to_string(), cfg.p as f64);
            params.insert("k".to_string(), k as f64);
            params.insert("delta".to_string(), n as f64 / cfg.p as f64);
            params.insert("rho".to_string(), k as f64 / n as f64);
            params.insert("rho_target".to_string(), rho);
            cells.push(Cell { n, k, params });
        }
    }

    let tasks: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |rep| (n, rep)))
        .collect();
    let results: Vec<Result<Vec<(usize, String, ReplicateRecord)>>> = tasks
        .par_iter()
        .map(|&(n, rep)| run_design(cfg, &cells, n, rep))
        .collect();

    let mut grouped: Vec<BTreeMap<String, Vec<ReplicateRecord>>> = vec![BTreeMap::new(); cells.len()];
    for r in results {
        for (cell, method, rec) in r? {
            grouped[cell].entry(method).or_default().push(rec);
        }
    }
    let reports = cells
        .into_iter()
        .zip(grouped)
        .map(|(cell, mut records)| {
            if cell.k > cell.n {
                return CellReport::skipped(cell.params);
            }
            for v in records.values_mut() {
                v.sort_by_key(|r| r.replicate);
            }
            CellReport::new(cell.params, records, cfg.keep_records)
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("runtime_seconds".into(), started.elapsed().as_secs_f64());
    Ok(ExperimentReport {
        experiment: "phase".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        cells: reports,
        metadata,
    })
}

/// One design draw shared by every `k` cell at this `n`.
fn run_design(
    cfg: &PhaseTransitionConfig,
    cells: &[Cell],
    n: usize,
    rep: usize,
) -> Result<Vec<(usize, String, ReplicateRecord)>> {
    let key = [n as u64, rep as u64];
    let x = DesignMatrix::new(rng::normal_matrix(
        &mut rng::substream(cfg.seed, &[tag::DESIGN, key[0], key[1]]),
        n,
        cfg.p,
    ))?;
    let noise = rng::normal_vector(&mut rng::substream(cfg.seed, &[tag::NOISE, key[0], key[1]]), n) * cfg.sigma;
    let threshold = if cfg.rules.contains(&Rule::Qut) {
        Some(qut_with_options(
            &x,
            1.0,
            &QutOptions {
                m: cfg.settings.qut_m,
                seed: rng::substream_seed(cfg.seed, &[tag::QUT, key[0], key[1]]),
                ..Default::default()
            },
        )?)
    } else {
        None
    };
    let opts = LassoOptions::default();
    let mut out = Vec::new();
    for (idx, cell) in cells.iter().enumerate().filter(|(_, c)| c.n == n && c.k <= n) {
        let truth: Vec<usize> = (0..cell.k).collect();
        let mut beta0 = Array1::zeros(cfg.p);
        beta0.slice_mut(ndarray::s![..cell.k]).fill(cfg.amplitude * cfg.sigma);
        let y = ResponseVector::new(x.predict(&beta0) + &noise)?;

        let grid = LambdaGrid::for_data_with(&x, &y, cfg.oracle_grid_size, cfg.oracle_grid_ratio)?;
        let scan = smallest_oracle_support(&x, &y, &truth, &grid, &opts)?;
        let cv_seed = rng::substream_seed(cfg.seed, &[tag::FOLDS, key[0], cell.k as u64, key[1]]);
        let selections = apply_rules(
            &x,
            &y,
            &cfg.rules,
            Some(cfg.sigma),
            threshold.as_ref(),
            cv_seed,
            &cfg.settings,
        )?;

        // a rule's own inclusive model is also a lasso model
        let s_star = selections
            .iter()
            .filter(|s| oracle_inclusive(&s.support, &truth))
            .map(|s| s.support.len())
            .chain(scan.s_star)
            .min();
        for s in selections {
            let (tpr, fdr) = tpr_fdr(&s.support, &truth);
            let inclusive = oracle_inclusive(&s.support, &truth);
            out.push((
                idx,
                s.rule.to_string(),
                ReplicateRecord {
                    replicate: rep,
                    lambda: Some(s.lambda),
                    support_size: s.support.len(),
                    tpr: Some(tpr),
                    fdr: Some(fdr),
                    oracle_inclusive: Some(inclusive),
                    oir: Some(oir(s_star, &s.support, inclusive)),
                    sigma_hat: s.sigma_used,
                    ..Default::default()
                },
            ));
        }
        out.push((
            idx,
            ORACLE.to_string(),
            ReplicateRecord {
                replicate: rep,
                lambda: scan.lambda_star,
                support_size: s_star.unwrap_or(0),
                oracle_inclusive: Some(s_star.is_some()),
                oir: Some(if s_star.is_some() { 1.0 } else { 0.0 }),
                ..Default::default()
            },
        ));
    }
    Ok(out)
}
