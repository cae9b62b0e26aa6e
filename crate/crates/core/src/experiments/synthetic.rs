//! Equicorrelated Gaussian designs with Laplace coefficients.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CellReport, ExperimentReport, ReplicateRecord};
use super::{apply_rules, check_replications, check_rules, RuleSettings};
use crate::design::{standardize, support_of, ResponseVector, StandardizeOptions};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::LassoOptions;
use crate::metrics::{oir, oracle_inclusive, smallest_oracle_support, tpr_fdr};
use crate::rng::{self, tag};
use crate::selectors::Rule;
use crate::thresholds::{qut_with_options, QutOptions};
use crate::variance::{rcv_variance, RcvOptions};

/// Redraws allowed for a coefficient vector with zero signal.
pub const MAX_REDRAWS: usize = 10;

/// How rules that need a noise level obtain it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaSource {
    Known,
    Rcv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub p: usize,
    /// Common correlation between columns.
    pub omega: f64,
    /// `ceil(N^theta)` nonzero coefficients.
    pub theta: f64,
    /// `beta0' Sigma_omega beta0 / sigma^2`.
    pub snr: f64,
    pub sigma: f64,
    pub sigma_source: SigmaSource,
    pub replications: usize,
    pub seed: u64,
    pub rules: Vec<Rule>,
    pub oracle_scan: bool,
    pub settings: RuleSettings,
    pub rcv: RcvOptions,
    pub keep_records: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 300,
            omega: 0.0,
            theta: 0.5,
            snr: 1.0,
            sigma: 1.0,
            sigma_source: SigmaSource::Rcv,
            replications: 50,
            seed: 1,
            rules: Rule::ALL.to_vec(),
            oracle_scan: true,
            settings: RuleSettings::default(),
            rcv: RcvOptions::default(),
            keep_records: false,
        }
    }
}

impl SyntheticConfig {
    pub fn sparsity(&self) -> usize {
        (self.n as f64).powf(self.theta).ceil() as usize
    }

    fn validate(&self) -> Result<()> {
        check_rules(&self.rules)?;
        check_replications(self.replications)?;
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("n and p must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::InvalidParameter(format!(
                "omega must lie in [0, 1), got {}",
                self.omega
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if self.sparsity() > self.p {
            return Err(Error::InvalidParameter(format!(
                "ceil(n^theta) = {} exceeds p = {}",
                self.sparsity(),
                self.p
            )));
        }
        if !(self.snr > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("snr and sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Rows drawn from `N(0, (1 - omega) I + omega 11')`.
pub fn equicorrelated_design<R: Rng>(rng: &mut R, n: usize, p: usize, omega: f64) -> Array2<f64> {
    let z = rng::normal_matrix(rng, n, p);
    let shared = rng::normal_vector(rng, n);
    let (a, b) = ((1.0 - omega).sqrt(), omega.sqrt());
    Array2::from_shape_fn((n, p), |(i, j)| a * z[[i, j]] + b * shared[i])
}

/// Standard Laplace draw by inversion of a uniform.
pub fn laplace<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `b' Sigma_omega b = (1 - omega) ||b||^2 + omega (sum b)^2`.
pub fn equicorrelated_quadratic_form(b: &Array1<f64>, omega: f64) -> f64 {
    let s = b.sum();
    (1.0 - omega) * b.dot(b) + omega * s * s
}

/// Draws `beta0` with `k` Laplace entries at uniformly random positions and
/// rescales it to the target `snr`. Returns the coefficients and the number
/// of redraws used.
pub fn draw_coefficients<R: Rng>(
    rng: &mut R,
    p: usize,
    k: usize,
    omega: f64,
    snr: f64,
    sigma: f64,
) -> Result<(Array1<f64>, usize)> {
    for redraws in 0..=MAX_REDRAWS {
        let positions = rand::seq::index::sample(rng, p, k);
        let mut b = Array1::zeros(p);
        for j in positions.iter() {
            b[j] = laplace(rng);
        }
        let q = equicorrelated_quadratic_form(&b, omega);
        if q > 0.0 && q.is_finite() {
            b *= (snr * sigma * sigma / q).sqrt();
            return Ok((b, redraws));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no coefficient draw with positive signal after {MAX_REDRAWS} redraws"
    )))
}

pub fn run_synthetic(cfg: &SyntheticConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let k = cfg.sparsity();
    let results: Vec<Result<(Vec<(String, ReplicateRecord)>, usize)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| replicate(cfg, k, rep))
        .collect();
    let mut records: BTreeMap<String, Vec<ReplicateRecord>> = BTreeMap::new();
    let mut redraws = 0;
    for r in results {
        let (recs, d) = r?;
        redraws += d;
        for (m, rec) in recs {
            records.entry(m).or_default().push(rec);
        }
    }
    let mut params = BTreeMap::new();
    params.insert("n".to_string(), cfg.n as f64);
    params.insert("p".to_string(), cfg.p as f64);
    params.insert("k".to_string(), k as f64);
    params.insert("omega".to_string(), cfg.omega);
    params.insert("theta".to_string(), cfg.theta);
    params.insert("snr".to_string(), cfg.snr);
    let mut metadata = BTreeMap::new();
    metadata.insert("runtime_seconds".into(), started.elapsed().as_secs_f64());
    metadata.insert("redraws".into(), redraws as f64);
    Ok(ExperimentReport {
        experiment: "synthetic".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        cells: vec![CellReport::new(params, records, cfg.keep_records)],
        metadata,
    })
}

fn replicate(cfg: &SyntheticConfig, k: usize, rep: usize) -> Result<(Vec<(String, ReplicateRecord)>, usize)> {
    let r = rep as u64;
    let raw = equicorrelated_design(
        &mut rng::substream(cfg.seed, &[tag::DESIGN, r]),
        cfg.n,
        cfg.p,
        cfg.omega,
    );
    let (beta0, redraws) = draw_coefficients(
        &mut rng::substream(cfg.seed, &[tag::SIGNAL, r]),
        cfg.p,
        k,
        cfg.omega,
        cfg.snr,
        cfg.sigma,
    )?;
    let noise = rng::normal_vector(&mut rng::substream(cfg.seed, &[tag::NOISE, r]), cfg.n) * cfg.sigma;
    let y = ResponseVector::new(raw.dot(&beta0) + noise)?;
    let x = standardize(&raw, StandardizeOptions::default())?;
    let truth = support_of(&beta0);

    let sigma_hat = if cfg.rules.iter().any(Rule::needs_sigma) {
        Some(match cfg.sigma_source {
            SigmaSource::Known => cfg.sigma,
            SigmaSource::Rcv => rcv_variance(
                &x,
                &y,
                rng::substream_seed(cfg.seed, &[tag::RCV, r]),
                &cfg.rcv,
                &LassoOptions::default(),
            )?
            .sigma(),
        })
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

    let scan = if cfg.oracle_scan {
        let grid = LambdaGrid::for_data_with(&x, &y, 200, 1e-4)?;
        smallest_oracle_support(&x, &y, &truth, &grid, &LassoOptions::default())?.s_star
    } else {
        None
    };
    let s_star = selections
        .iter()
        .filter(|s| oracle_inclusive(&s.support, &truth))
        .map(|s| s.support.len())
        .chain(scan)
        .min();
    let out = selections
        .into_iter()
        .map(|s| {
            let (tpr, fdr) = tpr_fdr(&s.support, &truth);
            let inclusive = oracle_inclusive(&s.support, &truth);
            (
                s.rule.to_string(),
                ReplicateRecord {
                    replicate: rep,
                    lambda: Some(s.lambda),
                    support_size: s.support.len(),
                    tpr: Some(tpr),
                    fdr: Some(fdr),
                    oracle_inclusive: Some(inclusive),
                    oir: cfg.oracle_scan.then(|| oir(s_star, &s.support, inclusive)),
                    sigma_hat: s.sigma_used,
                    ..Default::default()
                },
            )
        })
        .collect();
    Ok((out, redraws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_ceiling() {
        let cfg = SyntheticConfig {
            theta: 0.1,
            ..Default::default()
        };
        assert_eq!(cfg.sparsity(), 2);
        let cfg = SyntheticConfig::default();
        assert_eq!(cfg.sparsity(), 10);
    }

    #[test]
    fn snr_is_exact() {
        for (seed, omega) in [(1, 0.0), (2, 0.3), (3, 0.8)] {
            let mut r = rng::substream(seed, &[0]);
            let (b, _) = draw_coefficients(&mut r, 50, 7, omega, 2.5, 1.5).unwrap();
            assert_eq!(support_of(&b).len(), 7);
            let v = equicorrelated_quadratic_form(&b, omega) / (1.5 * 1.5);
            assert!((v - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_covariance_reduces_to_norm() {
        let b = Array1::from(vec![1.0, -2.0, 0.0]);
        assert_eq!(equicorrelated_quadratic_form(&b, 0.0), b.dot(&b));
    }

    #[test]
    fn laplace_moments() {
        let mut r = rng::substream(9, &[1]);
        let v: Vec<f64> = (0..200_000).map(|_| laplace(&mut r)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(m.abs() < 0.02);
        assert!((var - 2.0).abs() < 0.05);
    }
}
