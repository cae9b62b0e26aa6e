//! Abel inverse problem with a Haar wavelet basis.
//!
//! A radial profile `f(r)` is observed through its Abel projection
//! `(Af)(x) = 2 \int_x^inf f(r) r / sqrt(r^2 - x^2) dr` plus Gaussian noise.
//! Writing `f = W beta` in an orthonormal Haar basis gives the linear model
//! `y = A W beta + eps`, and the lasso on `X = A W` recovers a sparse set of
//! wavelet coefficients.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{standardize, support_of, DesignMatrix, ResponseVector, StandardizeOptions};
use crate::error::{Error, Result};
use crate::experiments::report::{fmt_f64, CellReport, ExperimentReport, ReplicateRecord};
use crate::grid::LambdaGrid;
use crate::lasso::{fit_path, LassoOptions};
use crate::metrics::{signal_mse, tpr_fdr};
use crate::rng::{self, tag};
use crate::selectors::{select_bic_on_path, select_qut, select_sure_on_path, Rule, SelectionOutcome};
use crate::thresholds::{qut_with_options, QutOptions};

fn check_power_of_two(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidSize(n));
    }
    Ok(())
}

/// Discretized Abel projection on the cell-midpoint grid `(i + 1/2) r_max / n`.
#[derive(Debug, Clone)]
pub struct AbelOperator {
    pub matrix: Array2<f64>,
    pub grid: Array1<f64>,
    pub r_max: f64,
}

impl AbelOperator {
    pub fn apply(&self, f: &Array1<f64>) -> Array1<f64> {
        self.matrix.dot(f)
    }
}

/// Builds the projection matrix for profiles that are piecewise constant on
/// the cells `[j h, (j + 1) h]`, `h = r_max / n`, and zero beyond `r_max`.
///
/// On each cell the kernel integrates in closed form,
/// `\int_a^b r / sqrt(r^2 - x^2) dr = sqrt(b^2 - x^2) - sqrt(a^2 - x^2)`,
/// so the square-root singularity at `r = x` is never evaluated.
pub fn build_abel(n: usize, r_max: f64) -> Result<AbelOperator> {
    check_power_of_two(n)?;
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
    }
    let h = r_max / n as f64;
    let grid = Array1::from_shape_fn(n, |i| (i as f64 + 0.5) * h);
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        let x2 = grid[i] * grid[i];
        // cells ending at or before x contribute nothing
        let mut lower = 0.0;
        for j in i..n {
            let b = (j + 1) as f64 * h;
            let upper = (b * b - x2).max(0.0).sqrt();
            matrix[[i, j]] = 2.0 * (upper - lower);
            lower = upper;
        }
    }
    Ok(AbelOperator { matrix, grid, r_max })
}

/// Orthonormal Haar transform, coefficients ordered coarse to fine:
/// `[scaling, level 1 (1 coef), level 2 (2 coefs), ..., finest (n/2 coefs)]`.
pub fn haar_analysis(v: &Array1<f64>) -> Result<Array1<f64>> {
    let n = v.len();
    check_power_of_two(n)?;
    let mut out = vec![0.0; n];
    let mut approx = v.to_vec();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        let mut next = vec![0.0; half];
        for k in 0..half {
            let (a, b) = (approx[2 * k], approx[2 * k + 1]);
            next[k] = (a + b) * s;
            out[half + k] = (a - b) * s;
        }
        approx = next;
        len = half;
    }
    out[0] = approx[0];
    Ok(Array1::from(out))
}

/// Inverse of [`haar_analysis`].
pub fn haar_synthesis_apply(c: &Array1<f64>) -> Result<Array1<f64>> {
    let n = c.len();
    check_power_of_two(n)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut approx = vec![c[0]];
    let mut len = 1;
    while len < n {
        let mut next = vec![0.0; 2 * len];
        for k in 0..len {
            let d = c[len + k];
            next[2 * k] = (approx[k] + d) * s;
            next[2 * k + 1] = (approx[k] - d) * s;
        }
        approx = next;
        len *= 2;
    }
    Ok(Array1::from(approx))
}

/// Haar synthesis matrix: column `k` is the basis vector of coefficient `k`.
#[derive(Debug, Clone)]
pub struct WaveletBasis {
    pub matrix: Array2<f64>,
}

pub fn haar_synthesis(n: usize) -> Result<WaveletBasis> {
    check_power_of_two(n)?;
    let mut matrix = Array2::zeros((n, n));
    for k in 0..n {
        let mut e = Array1::zeros(n);
        e[k] = 1.0;
        matrix.column_mut(k).assign(&haar_synthesis_apply(&e)?);
    }
    Ok(WaveletBasis { matrix })
}

/// Jump locations (as fractions of `r_max`) and jump heights of the blocks
/// test signal.
pub const BLOCKS_JUMPS: [(f64, f64); 11] = [
    (0.10, 4.0),
    (0.13, -5.0),
    (0.15, 3.0),
    (0.23, -4.0),
    (0.25, 5.0),
    (0.40, -4.2),
    (0.44, 2.1),
    (0.65, 4.3),
    (0.76, -3.1),
    (0.78, 2.1),
    (0.81, -4.2),
];

/// The blocks profile sampled at the `n` equispaced nodes `i r_max / (n - 1)`.
/// At `n = 512` this places the jumps so that the Haar expansion has exactly
/// 54 nonzero coefficients.
pub fn blocks_profile(n: usize, r_max: f64) -> Result<Array1<f64>> {
    check_power_of_two(n)?;
    let step = r_max / (n - 1) as f64;
    Ok(Array1::from_shape_fn(n, |i| {
        let r = i as f64 * step;
        BLOCKS_JUMPS
            .iter()
            .filter(|(t, _)| r >= t * r_max)
            .map(|(_, h)| h)
            .sum()
    }))
}

/// Nonzero test for wavelet coefficients of piecewise-constant signals.
pub const COEFFICIENT_ZERO_TOL: f64 = 1e-9;

/// How the signal strength is set from a nominal `snr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrConvention {
    /// `||beta0||_2^2 = snr sigma^2` on the standardized columns.
    CoefficientEnergy,
    /// `||beta0||_2 = kappa snr sigma` on the standardized columns: the
    /// profile amplitude grows linearly with `snr`.
    Amplitude { kappa: f64 },
}

/// Amplitude factor for [`SnrConvention::Amplitude`] that reproduces the true
/// positive rates of the reference Abel study at `n = 512`.
pub const DEFAULT_KAPPA: f64 = 40.0;

impl Default for SnrConvention {
    fn default() -> Self {
        SnrConvention::Amplitude { kappa: DEFAULT_KAPPA }
    }
}

impl SnrConvention {
    fn coefficient_norm(&self, snr: f64, sigma: f64) -> f64 {
        match *self {
            SnrConvention::CoefficientEnergy => snr.sqrt() * sigma,
            SnrConvention::Amplitude { kappa } => kappa * snr * sigma,
        }
    }
}

/// The fixed pieces of the Abel study: operator, basis, standardized design
/// `X = A W`, and the true wavelet coefficients of the blocks profile.
pub struct AbelProblem {
    pub operator: AbelOperator,
    pub basis: WaveletBasis,
    pub design: DesignMatrix,
    /// Haar coefficients of the unit blocks profile (raw columns).
    pub coefficients: Array1<f64>,
    pub support: Vec<usize>,
}

impl AbelProblem {
    pub fn new(n: usize, r_max: f64) -> Result<Self> {
        let operator = build_abel(n, r_max)?;
        let basis = haar_synthesis(n)?;
        let raw = operator.matrix.dot(&basis.matrix);
        let design = standardize(&raw, StandardizeOptions::default())?;
        let mut coefficients = haar_analysis(&blocks_profile(n, r_max)?)?;
        coefficients.mapv_inplace(|c| if c.abs() < COEFFICIENT_ZERO_TOL { 0.0 } else { c });
        let support = support_of(&coefficients);
        Ok(Self {
            operator,
            basis,
            design,
            coefficients,
            support,
        })
    }

    /// True coefficients on the standardized columns, scaled for `snr`.
    pub fn beta0(&self, snr: f64, sigma: f64, convention: SnrConvention) -> Array1<f64> {
        let mut b = &self.coefficients / self.design.column_scale();
        let norm = b.dot(&b).sqrt();
        b *= convention.coefficient_norm(snr, sigma) / norm;
        b
    }

    /// Profile `W (s * beta)` for coefficients on the standardized columns.
    pub fn profile(&self, beta_std: &Array1<f64>) -> Array1<f64> {
        self.basis.matrix.dot(&self.design.to_original_units(beta_std))
    }
}

/// The projection design is badly conditioned, so `lambda_max` is several
/// orders of magnitude above the useful penalties and the path has to reach
/// further down than the regression default.
pub const ABEL_GRID_SIZE: usize = 150;
pub const ABEL_GRID_RATIO: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbelConfig {
    pub n: usize,
    pub r_max: f64,
    pub snr: Vec<f64>,
    pub rules: Vec<Rule>,
    pub replications: usize,
    pub seed: u64,
    pub sigma: f64,
    pub snr_convention: SnrConvention,
    pub qut_m: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub keep_records: bool,
}

impl Default for AbelConfig {
    fn default() -> Self {
        Self {
            n: 512,
            r_max: 100.0,
            snr: vec![0.25, 0.5, 1.0],
            rules: vec![Rule::Qut, Rule::Bic, Rule::Sure],
            replications: 100,
            seed: 1,
            sigma: 1.0,
            snr_convention: SnrConvention::default(),
            qut_m: crate::thresholds::DEFAULT_MC_SIZE,
            grid_size: ABEL_GRID_SIZE,
            grid_ratio: ABEL_GRID_RATIO,
            keep_records: false,
        }
    }
}

/// Runs the Abel study: for each `snr` and replicate, simulate
/// `y = X beta0 + eps`, select the penalty with each rule, refit by least
/// squares, and score the recovered profile.
pub fn run_abel_experiment(cfg: &AbelConfig) -> Result<ExperimentReport> {
    if let Some(r) = cfg
        .rules
        .iter()
        .find(|r| !matches!(r, Rule::Qut | Rule::Bic | Rule::Sure))
    {
        return Err(Error::InvalidParameter(format!(
            "rule '{r}' is not available for the Abel study (qut, bic, sure)"
        )));
    }
    if cfg.replications == 0 {
        return Err(Error::InvalidParameter("replications must be positive".into()));
    }
    let started = Instant::now();
    let problem = AbelProblem::new(cfg.n, cfg.r_max)?;
    let threshold = qut_with_options(
        &problem.design,
        cfg.sigma,
        &QutOptions {
            m: cfg.qut_m,
            seed: rng::substream_seed(cfg.seed, &[tag::QUT]),
            ..Default::default()
        },
    )?;
    let opts = LassoOptions::default();

    let mut cells = Vec::with_capacity(cfg.snr.len());
    for &snr in &cfg.snr {
        let beta0 = problem.beta0(snr, cfg.sigma, cfg.snr_convention);
        let f_true = problem.profile(&beta0);
        let signal = problem.design.predict(&beta0);
        let outcomes: Vec<Result<Vec<(Rule, ReplicateRecord)>>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut r = rng::substream(cfg.seed, &[tag::NOISE, snr.to_bits(), rep as u64]);
                let noise = rng::normal_vector(&mut r, cfg.n) * cfg.sigma;
                let y = ResponseVector::new(&signal + &noise)?;
                let mut selections: Vec<SelectionOutcome> = Vec::new();
                let needs_path = cfg.rules.iter().any(|r| matches!(r, Rule::Bic | Rule::Sure));
                let path = if needs_path {
                    let grid = LambdaGrid::for_data_with(&problem.design, &y, cfg.grid_size, cfg.grid_ratio)?;
                    fit_path(&problem.design, &y, grid.values(), &opts)?
                } else {
                    Vec::new()
                };
                for rule in &cfg.rules {
                    selections.push(match rule {
                        Rule::Qut => select_qut(&problem.design, &y, &threshold, &opts)?,
                        Rule::Bic => select_bic_on_path(&problem.design, &y, &path, cfg.sigma)?,
                        Rule::Sure => select_sure_on_path(&problem.design, &y, &path, cfg.sigma)?,
                        _ => unreachable!("validated above"),
                    });
                }
                selections
                    .into_iter()
                    .map(|s| {
                        let (tpr, fdr) = tpr_fdr(&s.support, &problem.support);
                        let f_hat = problem.profile(&s.beta_refit);
                        let mse = signal_mse(&f_hat, &f_true)?;
                        Ok((
                            s.rule,
                            ReplicateRecord {
                                replicate: rep,
                                lambda: Some(s.lambda),
                                support_size: s.support.len(),
                                tpr: Some(tpr),
                                fdr: Some(fdr),
                                mse: Some(mse),
                                sigma_hat: s.sigma_used,
                                ..Default::default()
                            },
                        ))
                    })
                    .collect()
            })
            .collect();
        let mut records: BTreeMap<String, Vec<ReplicateRecord>> = BTreeMap::new();
        for rep in outcomes {
            for (rule, rec) in rep? {
                records.entry(rule.to_string()).or_default().push(rec);
            }
        }
        let mut params = BTreeMap::new();
        params.insert("snr".to_string(), snr);
        cells.push(CellReport::new(params, records, cfg.keep_records));
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("runtime_seconds".into(), started.elapsed().as_secs_f64());
    metadata.insert("lambda_qut".into(), threshold.lambda_qut);
    metadata.insert("alpha".into(), threshold.alpha);
    metadata.insert("true_support_size".into(), problem.support.len() as f64);
    Ok(ExperimentReport {
        experiment: "abel".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        cells,
        metadata,
    })
}

/// Writes the study as a table: one row per rule, and an `(FDR, TPR, MSE)`
/// column group per `snr`. Mean MSE values are multiplied by `mse_scale`.
pub fn write_method_table_csv<W: Write>(report: &ExperimentReport, mse_scale: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["method".to_string()];
    for cell in &report.cells {
        let snr = cell.param("snr").unwrap_or(f64::NAN);
        for m in ["fdr", "tpr", "mse"] {
            header.push(format!("snr={snr}:{m}"));
        }
    }
    out.write_record(&header)?;
    let rules: Vec<String> = report
        .cells
        .first()
        .map(|c| c.methods.keys().cloned().collect())
        .unwrap_or_default();
    let order = ["qut", "bic", "sure"];
    let mut rules_sorted: Vec<&String> = rules.iter().collect();
    rules_sorted.sort_by_key(|r| order.iter().position(|o| o == r).unwrap_or(usize::MAX));
    for rule in rules_sorted {
        let mut row = vec![rule.to_uppercase()];
        for cell in &report.cells {
            let s = &cell.methods[rule];
            let mean = |st: Option<crate::experiments::report::Stat>| st.map(|v| v.mean).unwrap_or(f64::NAN);
            row.push(fmt_f64(mean(s.fdr)));
            row.push(fmt_f64(mean(s.tpr)));
            row.push(fmt_f64(mean(s.mse) * mse_scale));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_sizes() {
        assert!(matches!(build_abel(100, 1.0), Err(Error::InvalidSize(100))));
        assert!(matches!(haar_synthesis(12), Err(Error::InvalidSize(12))));
        assert!(blocks_profile(3, 1.0).is_err());
    }

    #[test]
    fn operator_is_upper_triangular_and_nonnegative() {
        let a = build_abel(16, 1.0).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let v = a.matrix[[i, j]];
                assert!(v.is_finite() && v >= 0.0);
                if j < i {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_has_single_coefficient() {
        let c = haar_analysis(&Array1::from_elem(64, 3.0)).unwrap();
        assert!((c[0] - 3.0 * 8.0).abs() < 1e-12);
        assert!(c.iter().skip(1).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn blocks_has_54_coefficients() {
        let p = AbelProblem::new(512, 100.0).unwrap();
        assert_eq!(p.support.len(), 54);
    }

    #[test]
    fn orthonormal_basis() {
        for n in [8, 64, 512] {
            let w = haar_synthesis(n).unwrap().matrix;
            let g = w.t().dot(&w);
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[[i, j]] - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn snr_conventions() {
        let p = AbelProblem::new(64, 100.0).unwrap();
        let b = p.beta0(0.5, 1.0, SnrConvention::CoefficientEnergy);
        assert!((b.dot(&b) - 0.5).abs() < 1e-12);
        let b = p.beta0(0.5, 1.0, SnrConvention::Amplitude { kappa: 40.0 });
        assert!((b.dot(&b).sqrt() - 20.0).abs() < 1e-10);
    }
}
