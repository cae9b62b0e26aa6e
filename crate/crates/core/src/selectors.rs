//! Threshold-selection rules for the lasso.
//!
//! Every rule returns a [`SelectionOutcome`]: the chosen penalty, the lasso
//! support at that penalty, and the least-squares refit on that support.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::{fit_path, LassoFit, LassoOptions, LassoSolver};
use crate::refit::{refit_least_squares, support_rank};
use crate::rng::{self, tag};
use crate::thresholds::NullQuantileEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Cv,
    Qut,
    Bic,
    Sure,
    #[serde(rename = "sl")]
    ScaledLasso,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Cv, Rule::Qut, Rule::Bic, Rule::Sure, Rule::ScaledLasso];

    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::Cv => "cv",
            Rule::Qut => "qut",
            Rule::Bic => "bic",
            Rule::Sure => "sure",
            Rule::ScaledLasso => "sl",
        }
    }

    /// Rules that need a noise level supplied from outside.
    pub fn needs_sigma(&self) -> bool {
        matches!(self, Rule::Qut | Rule::Bic | Rule::Sure)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Ok(Rule::Cv),
            "qut" => Ok(Rule::Qut),
            "bic" => Ok(Rule::Bic),
            "sure" => Ok(Rule::Sure),
            "sl" | "scaled" | "scaled-lasso" => Ok(Rule::ScaledLasso),
            other => Err(Error::InvalidParameter(format!("unknown rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub rule: Rule,
    pub lambda: f64,
    pub support: Vec<usize>,
    pub beta_lasso: Array1<f64>,
    pub beta_refit: Array1<f64>,
    pub sigma_used: Option<f64>,
    /// Rule-specific curves and traces, e.g. `"cv_error"`, `"bic"`, `"sigma"`.
    pub diagnostics: BTreeMap<String, Vec<f64>>,
}

impl SelectionOutcome {
    fn from_fit(
        rule: Rule,
        x: &DesignMatrix,
        y: &ResponseVector,
        fit: &LassoFit,
        sigma_used: Option<f64>,
        diagnostics: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        Ok(Self {
            rule,
            lambda: fit.lambda,
            support: fit.active_set.clone(),
            beta_lasso: fit.beta.clone(),
            beta_refit: refit_least_squares(x, y, &fit.active_set)?,
            sigma_used,
            diagnostics,
        })
    }
}

/// First minimizer of `values`; since grids descend this breaks ties toward
/// the larger penalty.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn rss(x: &DesignMatrix, y: &ResponseVector, beta: &Array1<f64>) -> f64 {
    let r = y.values() - &x.predict(beta);
    r.dot(&r)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn nonconverged(path: &[LassoFit]) -> Vec<f64> {
    vec![path.iter().filter(|f| !f.converged).count() as f64]
}

/// Lasso at the quantile universal threshold.
pub fn select_qut(
    x: &DesignMatrix,
    y: &ResponseVector,
    threshold: &NullQuantileEstimate,
    opts: &LassoOptions,
) -> Result<SelectionOutcome> {
    let mut solver = LassoSolver::new(x, y)?;
    let fit = solver.solve(threshold.lambda_qut, opts);
    let mut diag = BTreeMap::new();
    diag.insert("alpha".into(), vec![threshold.alpha]);
    diag.insert("nonconverged".into(), vec![f64::from(u8::from(!fit.converged))]);
    SelectionOutcome::from_fit(Rule::Qut, x, y, &fit, Some(threshold.sigma), diag)
}

/// Assigns each row to one of `folds` folds after a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let perm = rng::permutation(&mut rng::substream(seed, &[tag::FOLDS]), n);
    let mut fold = vec![0; n];
    for (i, &row) in perm.iter().enumerate() {
        fold[row] = i % folds;
    }
    fold
}

/// K-fold cross-validation over `grid`, minimizing mean held-out squared error.
///
/// Training folds use the penalty scaled by `n_train / n`, which keeps the
/// per-observation penalty equal to that of the full-data fit.
pub fn select_cv(
    x: &DesignMatrix,
    y: &ResponseVector,
    grid: &LambdaGrid,
    folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<SelectionOutcome> {
    x.check_response(y)?;
    let n = x.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidFolds(format!(
            "need 2 <= folds <= n, got folds = {folds}, n = {n}"
        )));
    }
    let assignment = fold_assignment(n, folds, seed);
    let mut cv_error = vec![0.0; grid.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
        if train.is_empty() {
            return Err(Error::InvalidFolds(format!("fold {k} has no training rows")));
        }
        let xtr = x.select_rows(&train);
        let ytr = y.select(&train);
        let xte = x.select_rows(&test);
        let yte = y.select(&test);
        let shrink = train.len() as f64 / n as f64;
        let mut solver = LassoSolver::new(&xtr, &ytr)?;
        for (g, &lambda) in grid.values().iter().enumerate() {
            let fit = solver.solve(lambda * shrink, opts);
            let r = yte.values() - &xte.predict(&fit.beta);
            cv_error[g] += r.dot(&r) / test.len() as f64 / folds as f64;
        }
    }
    let best = argmin(&cv_error);
    let path = fit_path(x, y, &grid.values()[..=best], opts)?;
    let fit = path.last().expect("non-empty path");
    let mut diag = BTreeMap::new();
    diag.insert("cv_error".into(), cv_error);
    diag.insert("nonconverged".into(), nonconverged(&path));
    SelectionOutcome::from_fit(Rule::Cv, x, y, fit, None, diag)
}

/// `-2 log L + k ln N` for a Gaussian fit with known `sigma`.
pub fn bic_value(rss: f64, k: usize, n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    let s2 = sigma * sigma;
    n * s2.ln() + n * (2.0 * std::f64::consts::PI).ln() + rss / s2 + k as f64 * n.ln()
}

/// `-2 log L + 2k`.
pub fn aic_value(rss: f64, k: usize, n: usize, sigma: f64) -> f64 {
    bic_value(rss, 0, n, sigma) + 2.0 * k as f64
}

/// `||y - X b||^2 + 2 sigma^2 rank`.
pub fn sure_value(rss: f64, rank: usize, sigma: f64) -> f64 {
    rss + 2.0 * sigma * sigma * rank as f64
}

/// BIC along the grid with `k = |active set|`.
pub fn select_bic(
    x: &DesignMatrix,
    y: &ResponseVector,
    grid: &LambdaGrid,
    sigma: f64,
    opts: &LassoOptions,
) -> Result<SelectionOutcome> {
    check_sigma(sigma)?;
    let path = fit_path(x, y, grid.values(), opts)?;
    select_bic_on_path(x, y, &path, sigma)
}

/// BIC evaluated on precomputed grid fits.
pub fn select_bic_on_path(
    x: &DesignMatrix,
    y: &ResponseVector,
    path: &[LassoFit],
    sigma: f64,
) -> Result<SelectionOutcome> {
    check_sigma(sigma)?;
    let curve: Vec<f64> = path
        .iter()
        .map(|f| bic_value(rss(x, y, &f.beta), f.active_set.len(), x.n(), sigma))
        .collect();
    let best = argmin(&curve);
    let mut diag = BTreeMap::new();
    diag.insert("bic".into(), curve);
    diag.insert("nonconverged".into(), nonconverged(path));
    SelectionOutcome::from_fit(Rule::Bic, x, y, &path[best], Some(sigma), diag)
}

/// SURE along the grid, with the rank of the active columns standing in for
/// the rank of the equicorrelation set.
pub fn select_sure(
    x: &DesignMatrix,
    y: &ResponseVector,
    grid: &LambdaGrid,
    sigma: f64,
    opts: &LassoOptions,
) -> Result<SelectionOutcome> {
    check_sigma(sigma)?;
    let path = fit_path(x, y, grid.values(), opts)?;
    select_sure_on_path(x, y, &path, sigma)
}

pub fn select_sure_on_path(
    x: &DesignMatrix,
    y: &ResponseVector,
    path: &[LassoFit],
    sigma: f64,
) -> Result<SelectionOutcome> {
    check_sigma(sigma)?;
    let (best, curve) = sure_argmin(x, y, path, sigma);
    let mut diag = BTreeMap::new();
    diag.insert("sure".into(), curve);
    diag.insert("nonconverged".into(), nonconverged(path));
    SelectionOutcome::from_fit(Rule::Sure, x, y, &path[best], Some(sigma), diag)
}

/// SURE values along a path. Ranks are computed once per distinct support.
pub fn sure_curve(x: &DesignMatrix, y: &ResponseVector, path: &[LassoFit], sigma: f64) -> Vec<f64> {
    let mut ranks: HashMap<&[usize], usize> = HashMap::new();
    path.iter()
        .map(|f| {
            let rank = *ranks
                .entry(f.active_set.as_slice())
                .or_insert_with(|| support_rank(x, &f.active_set));
            sure_value(rss(x, y, &f.beta), rank, sigma)
        })
        .collect()
}

fn difference_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() {
        if j == b.len() || a[i] < b[j] {
            count += 1;
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    count
}

/// Minimizer of the SURE curve, computing only the ranks that can affect it.
///
/// A known rank `r'` of support `S'` bounds the rank of `S` by
/// `r' - |S' \ S| <= rank(S) <= r' + |S \ S'|` (and `rank(S) <= |S|`).
/// Exact ranks are computed for the fit with the smallest lower bound until
/// no unresolved fit can beat or tie the best exact value. The returned curve
/// holds exact values where a rank was computed and NaN elsewhere; its
/// minimizer is identical to that of [`sure_curve`].
pub fn sure_argmin(x: &DesignMatrix, y: &ResponseVector, path: &[LassoFit], sigma: f64) -> (usize, Vec<f64>) {
    let m = path.len();
    let rss: Vec<f64> = path.iter().map(|f| rss(x, y, &f.beta)).collect();
    let mut lower = vec![0; m];
    let mut upper: Vec<usize> = path.iter().map(|f| f.active_set.len().min(x.n())).collect();
    let mut rank: Vec<Option<usize>> = upper.iter().map(|&u| (u == 0).then_some(0)).collect();
    let value = |i: usize, r: usize| sure_value(rss[i], r, sigma);
    loop {
        // best exact value, ties to the earlier (larger) penalty
        let best =
            (0..m)
                .filter_map(|i| rank[i].map(|r| (i, value(i, r))))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv <= v => acc,
                    _ => Some((i, v)),
                });
        let bound = (0..m).map(|i| value(i, upper[i])).fold(f64::INFINITY, f64::min);
        let target = best.map_or(bound, |(_, v)| v.min(bound));
        let next = (0..m)
            .filter(|&i| rank[i].is_none())
            .filter(|&i| {
                let lb = value(i, lower[i]);
                lb < target || (lb == target && best.is_some_and(|(b, _)| i < b)) || best.is_none()
            })
            .min_by(|&a, &b| value(a, lower[a]).total_cmp(&value(b, lower[b])).then(a.cmp(&b)));
        let Some(i) = next else {
            let curve = (0..m).map(|i| rank[i].map_or(f64::NAN, |r| value(i, r))).collect();
            return (best.map_or(0, |(b, _)| b), curve);
        };
        let s = path[i].active_set.as_slice();
        let r = support_rank(x, s);
        for j in 0..m {
            let t = path[j].active_set.as_slice();
            if rank[j].is_some() {
                continue;
            }
            if t == s {
                rank[j] = Some(r);
                continue;
            }
            lower[j] = lower[j].max(r.saturating_sub(difference_size(s, t)));
            upper[j] = upper[j].min(r + difference_size(t, s));
            if lower[j] == upper[j] {
                rank[j] = Some(lower[j]);
            }
        }
        rank[i] = Some(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledLassoOptions {
    /// Penalty level relative to the noise; defaults to `sqrt(2^(j-1) ln P)`
    /// with `j = 2`.
    pub lambda0: Option<f64>,
    /// Degrees-of-freedom fraction in the variance update, `k = a N`.
    pub a: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScaledLassoOptions {
    fn default() -> Self {
        Self {
            lambda0: None,
            a: 0.0,
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

pub const SIGMA_COLLAPSE: f64 = 1e-8;

/// `sqrt(2^(j-1) ln P)`.
pub fn scaled_lasso_lambda0(p: usize, j: u32) -> f64 {
    (2f64.powi(j as i32 - 1) * (p as f64).ln()).sqrt()
}

/// Root-mean-square column norm; the penalty `sigma * lambda0` is expressed
/// for unit-norm columns and multiplied by this to match the design's scale.
fn column_scale(x: &DesignMatrix) -> f64 {
    let (sum, count) = x
        .values()
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(j, _)| !x.is_excluded(*j))
        .fold((0.0, 0usize), |(s, c), (_, col)| (s + col.dot(&col), c + 1));
    if count == 0 {
        1.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// One alternation: lasso at `sigma * lambda0 * scale`, then the residual
/// variance with `k = a N`. Returns the fit and the updated noise level.
pub fn scaled_lasso_step(
    solver: &mut LassoSolver<'_>,
    x: &DesignMatrix,
    y: &ResponseVector,
    sigma: f64,
    lambda0: f64,
    a: f64,
    opts: &LassoOptions,
) -> (LassoFit, f64) {
    let fit = solver.solve(sigma * lambda0 * column_scale(x), opts);
    let dof = x.n() as f64 * (1.0 - a);
    let sigma_next = (rss(x, y, &fit.beta) / dof).sqrt();
    (fit, sigma_next)
}

/// Joint estimation of coefficients and noise level by alternating lasso and
/// variance updates until the noise level stabilizes.
pub fn select_scaled_lasso(
    x: &DesignMatrix,
    y: &ResponseVector,
    sl: &ScaledLassoOptions,
    opts: &LassoOptions,
) -> Result<SelectionOutcome> {
    x.check_response(y)?;
    if !(0.0..1.0).contains(&sl.a) {
        return Err(Error::InvalidParameter(format!("a must lie in [0, 1), got {}", sl.a)));
    }
    let lambda0 = sl.lambda0.unwrap_or_else(|| scaled_lasso_lambda0(x.p().max(2), 2));
    if !(lambda0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda0 must be positive, got {lambda0}"
        )));
    }
    let mut sigma = (y.values().dot(y.values()) / x.n() as f64).sqrt();
    if sigma < SIGMA_COLLAPSE {
        return Err(Error::SigmaCollapse(sigma));
    }
    let mut solver = LassoSolver::new(x, y)?;
    let mut trace = vec![sigma];
    for _ in 0..sl.max_iter {
        let (fit, next) = scaled_lasso_step(&mut solver, x, y, sigma, lambda0, sl.a, opts);
        trace.push(next);
        if next < SIGMA_COLLAPSE {
            return Err(Error::SigmaCollapse(next));
        }
        if (next - sigma).abs() < sl.tol * sigma {
            let mut diag = BTreeMap::new();
            diag.insert("sigma".into(), trace);
            diag.insert("lambda0".into(), vec![lambda0]);
            return SelectionOutcome::from_fit(Rule::ScaledLasso, x, y, &fit, Some(next), diag);
        }
        sigma = next;
    }
    Err(Error::ScaledLassoNonConvergence(sl.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn rule_names_round_trip() {
        for r in Rule::ALL {
            assert_eq!(r.as_str().parse::<Rule>().unwrap(), r);
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.as_str()));
        }
        assert!("foo".parse::<Rule>().is_err());
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), 1);
    }

    #[test]
    fn sure_at_lambda_max_is_rss_of_zero_model() {
        let x = DesignMatrix::new(Array2::eye(3)).unwrap();
        let y = ResponseVector::new(array![1.0, -2.0, 0.5]).unwrap();
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let path = fit_path(&x, &y, grid.values(), &Default::default()).unwrap();
        let curve = sure_curve(&x, &y, &path, 1.0);
        assert_eq!(curve[0], 1.0 + 4.0 + 0.25);
    }

    #[test]
    fn pruned_sure_matches_full_curve() {
        let mut r = rng::substream(5, &[0]);
        let raw = rng::normal_matrix(&mut r, 30, 60);
        let x = crate::design::standardize(&raw, Default::default()).unwrap();
        let mut b = Array1::zeros(60);
        b[3] = 2.0;
        b[10] = -1.5;
        let y = ResponseVector::new(x.predict(&b) + rng::normal_vector(&mut r, 30)).unwrap();
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let path = fit_path(&x, &y, grid.values(), &Default::default()).unwrap();
        for sigma in [0.3, 1.0, 3.0] {
            let full = sure_curve(&x, &y, &path, sigma);
            let (best, partial) = sure_argmin(&x, &y, &path, sigma);
            assert_eq!(best, argmin(&full));
            for (a, b) in full.iter().zip(&partial) {
                assert!(b.is_nan() || a == b);
            }
        }
    }

    #[test]
    fn folds_validated() {
        let x = DesignMatrix::new(Array2::eye(3)).unwrap();
        let y = ResponseVector::new(array![1.0, -2.0, 0.5]).unwrap();
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let opts = LassoOptions::default();
        assert!(matches!(
            select_cv(&x, &y, &grid, 1, 0, &opts),
            Err(Error::InvalidFolds(_))
        ));
        assert!(matches!(
            select_cv(&x, &y, &grid, 4, 0, &opts),
            Err(Error::InvalidFolds(_))
        ));
    }

    #[test]
    fn folds_partition_rows() {
        let f = fold_assignment(23, 10, 4);
        for k in 0..10 {
            let c = f.iter().filter(|&&v| v == k).count();
            assert!(c == 2 || c == 3);
        }
        assert_eq!(f, fold_assignment(23, 10, 4));
    }

    #[test]
    fn scaled_lasso_zero_response_collapses() {
        let x = DesignMatrix::new(Array2::eye(4)).unwrap();
        let y = ResponseVector::new(Array1::zeros(4)).unwrap();
        assert!(matches!(
            select_scaled_lasso(&x, &y, &Default::default(), &Default::default()),
            Err(Error::SigmaCollapse(_))
        ));
    }

    #[test]
    fn bic_aic_penalties() {
        let b0 = bic_value(10.0, 0, 100, 1.0);
        assert!((bic_value(10.0, 3, 100, 1.0) - b0 - 3.0 * 100f64.ln()).abs() < 1e-9);
        assert!((aic_value(10.0, 3, 100, 1.0) - b0 - 6.0).abs() < 1e-9);
    }
}
