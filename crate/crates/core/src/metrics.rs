//! Selection and prediction metrics.
//!
//! Supports are sorted index slices. Null denominators follow the usual
//! convention: TPR is 1 when the true support is empty and FDR is 0 when the
//! estimated support is empty.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::{LassoOptions, LassoSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tpr: f64,
    pub fdr: f64,
    pub oracle_inclusive: bool,
    pub oir: f64,
    pub support_size: usize,
}

impl SelectionMetrics {
    pub fn compute(est: &[usize], truth: &[usize], s_star: Option<usize>) -> Self {
        let (tpr, fdr) = tpr_fdr(est, truth);
        let inclusive = oracle_inclusive(est, truth);
        Self {
            tpr,
            fdr,
            oracle_inclusive: inclusive,
            oir: oir(s_star, est, inclusive),
            support_size: est.len(),
        }
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// True positive rate and false discovery rate of `est` against `truth`.
pub fn tpr_fdr(est: &[usize], truth: &[usize]) -> (f64, f64) {
    debug_assert!(est.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(truth.windows(2).all(|w| w[0] < w[1]));
    let hits = intersection_size(est, truth);
    let tpr = if truth.is_empty() {
        1.0
    } else {
        hits as f64 / truth.len() as f64
    };
    let fdr = if est.is_empty() {
        0.0
    } else {
        (est.len() - hits) as f64 / est.len() as f64
    };
    (tpr, fdr)
}

/// `est` contains every index of `truth`.
pub fn oracle_inclusive(est: &[usize], truth: &[usize]) -> bool {
    intersection_size(est, truth) == truth.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSupport {
    /// Size of the smallest oracle-inclusive lasso model on the grid; `None`
    /// when no grid fit contains the true support.
    pub s_star: Option<usize>,
    /// Largest grid penalty attaining `s_star`.
    pub lambda_star: Option<f64>,
}

/// Scans lasso fits over `grid` for the smallest model containing `truth`.
///
/// The scan stops early once a model of size `|truth|` is found (nothing
/// smaller can be inclusive) or once the active set reaches `min(N, P)`
/// nonzeros, the most a lasso solution in general position can hold.
pub fn smallest_oracle_support(
    x: &DesignMatrix,
    y: &ResponseVector,
    truth: &[usize],
    grid: &LambdaGrid,
    opts: &LassoOptions,
) -> Result<OracleSupport> {
    let mut solver = LassoSolver::new(x, y)?;
    let mut best = OracleSupport {
        s_star: None,
        lambda_star: None,
    };
    let saturated = x.n().min(x.p());
    for &lambda in grid.values() {
        let fit = solver.solve(lambda, opts);
        let size = fit.active_set.len();
        if oracle_inclusive(&fit.active_set, truth) && best.s_star.is_none_or(|s| size < s) {
            best = OracleSupport {
                s_star: Some(size),
                lambda_star: Some(lambda),
            };
        }
        if best.s_star == Some(truth.len()) || size >= saturated {
            break;
        }
    }
    Ok(best)
}

/// `s_star / |est|`, or 0 when `est` is not oracle inclusive (its size is
/// taken as infinite). Two empty models give 1.
pub fn oir(s_star: Option<usize>, est: &[usize], is_oracle_inclusive: bool) -> f64 {
    if !is_oracle_inclusive {
        return 0.0;
    }
    match s_star {
        // an inclusive estimate is itself a lasso model the scan may have missed
        None => 1.0,
        Some(_) if est.is_empty() => 1.0,
        Some(s) => (s as f64 / est.len() as f64).min(1.0),
    }
}

/// Mean squared prediction error on held-out rows.
pub fn predictive_risk(beta: &Array1<f64>, x_test: &DesignMatrix, y_test: &ResponseVector) -> Result<f64> {
    x_test.check_response(y_test)?;
    if beta.len() != x_test.p() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients have length {} but test design has {} columns",
            beta.len(),
            x_test.p()
        )));
    }
    let r = y_test.values() - &x_test.predict(beta);
    Ok(r.dot(&r) / y_test.len() as f64)
}

/// `||f_hat - f||^2 / N`.
pub fn signal_mse(f_hat: &Array1<f64>, f_true: &Array1<f64>) -> Result<f64> {
    if f_hat.len() != f_true.len() {
        return Err(Error::DimensionMismatch(format!(
            "signal lengths differ: {} vs {}",
            f_hat.len(),
            f_true.len()
        )));
    }
    let d = f_hat - f_true;
    Ok(d.dot(&d) / f_true.len() as f64)
}
