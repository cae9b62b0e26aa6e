//! Noise-variance estimation.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::LassoOptions;
use crate::refit::refit_least_squares;
use crate::rng::{self, tag};
use crate::selectors::{select_cv, select_scaled_lasso, Rule, ScaledLassoOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Residual,
    Rcv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma2: f64,
    pub method: VarianceMethod,
    /// Degrees of freedom removed; one entry per half for RCV.
    pub k_used: Vec<usize>,
    /// Set when a half fell back to `k = 0` because the selected model used up
    /// the degrees of freedom of the other half.
    pub fallback: bool,
    pub details: BTreeMap<String, f64>,
}

impl VarianceEstimate {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// `||y - X beta||^2 / (N - k)`.
pub fn residual_variance(
    x: &DesignMatrix,
    y: &ResponseVector,
    beta: &Array1<f64>,
    k: usize,
) -> Result<VarianceEstimate> {
    x.check_response(y)?;
    let n = x.n();
    if k >= n {
        return Err(Error::DegreesOfFreedomExhausted { k, n });
    }
    let r = y.values() - &x.predict(beta);
    Ok(VarianceEstimate {
        sigma2: r.dot(&r) / (n - k) as f64,
        method: VarianceMethod::Residual,
        k_used: vec![k],
        fallback: false,
        details: BTreeMap::new(),
    })
}

pub const RCV_MIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcvOptions {
    /// Model selector run on each half: cross-validation or scaled lasso.
    pub inner: Rule,
    pub folds: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
}

impl Default for RcvOptions {
    fn default() -> Self {
        Self {
            inner: Rule::Cv,
            folds: 10,
            grid_size: crate::grid::DEFAULT_GRID_SIZE,
            grid_ratio: crate::grid::DEFAULT_GRID_RATIO,
        }
    }
}

/// Seeded split of `0..n` into halves of sizes `floor(n/2)` and `ceil(n/2)`.
pub fn rcv_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = rng::permutation(&mut rng::substream(seed, &[tag::RCV]), n);
    let (a, b) = perm.split_at(n / 2);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Refitted cross-validation: select a model on each half, refit it by least
/// squares on the other half, and average the two residual variances.
pub fn rcv_variance(
    x: &DesignMatrix,
    y: &ResponseVector,
    seed: u64,
    rcv: &RcvOptions,
    opts: &LassoOptions,
) -> Result<VarianceEstimate> {
    x.check_response(y)?;
    if x.n() < RCV_MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "refitted cross-validation needs at least {RCV_MIN_ROWS} rows, got {}",
            x.n()
        )));
    }
    let (first, second) = rcv_halves(x.n(), seed);
    rcv_from_halves(x, y, &first, &second, seed, rcv, opts)
}

/// [`rcv_variance`] with an explicit split.
pub fn rcv_from_halves(
    x: &DesignMatrix,
    y: &ResponseVector,
    first: &[usize],
    second: &[usize],
    seed: u64,
    rcv: &RcvOptions,
    opts: &LassoOptions,
) -> Result<VarianceEstimate> {
    let halves = [
        (x.select_rows(first), y.select(first)),
        (x.select_rows(second), y.select(second)),
    ];
    let models = [
        select_model(&halves[0].0, &halves[0].1, seed, rcv, opts)?,
        select_model(&halves[1].0, &halves[1].1, seed, rcv, opts)?,
    ];
    let mut fallback = false;
    let mut k_used = Vec::with_capacity(2);
    let mut estimates = [0.0; 2];
    // model from half i is refitted on the other half
    for i in 0..2 {
        let (xo, yo) = &halves[1 - i];
        let model = &models[i];
        // a model as large as the half leaves no residual degrees of freedom;
        // the empty model (k = 0) is used instead
        let (beta, k) = if model.len() >= xo.n() {
            fallback = true;
            (Array1::zeros(xo.p()), 0)
        } else {
            (refit_least_squares(xo, yo, model)?, model.len())
        };
        estimates[i] = residual_variance(xo, yo, &beta, k)?.sigma2;
        k_used.push(k);
    }
    let mut details = BTreeMap::new();
    details.insert("sigma2_first".into(), estimates[0]);
    details.insert("sigma2_second".into(), estimates[1]);
    details.insert("model_size_first".into(), models[0].len() as f64);
    details.insert("model_size_second".into(), models[1].len() as f64);
    Ok(VarianceEstimate {
        sigma2: 0.5 * (estimates[0] + estimates[1]),
        method: VarianceMethod::Rcv,
        k_used,
        fallback,
        details,
    })
}

fn select_model(
    x: &DesignMatrix,
    y: &ResponseVector,
    seed: u64,
    rcv: &RcvOptions,
    opts: &LassoOptions,
) -> Result<Vec<usize>> {
    match rcv.inner {
        Rule::Cv => {
            let grid = LambdaGrid::for_data_with(x, y, rcv.grid_size, rcv.grid_ratio)?;
            let folds = rcv.folds.min(x.n());
            Ok(select_cv(x, y, &grid, folds, seed, opts)?.support)
        }
        Rule::ScaledLasso => Ok(select_scaled_lasso(x, y, &ScaledLassoOptions::default(), opts)?.support),
        other => Err(Error::InvalidParameter(format!(
            "rule '{other}' needs a known noise level and cannot drive RCV"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn null_model_k_zero_is_mean_square() {
        let x = DesignMatrix::new(Array2::eye(4)).unwrap();
        let y = ResponseVector::new(array![1.0, -2.0, 2.0, 1.0]).unwrap();
        let est = residual_variance(&x, &y, &Array1::zeros(4), 0).unwrap();
        assert_eq!(est.sigma2, 10.0 / 4.0);
    }

    #[test]
    fn exact_fit_is_zero() {
        let x = DesignMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let beta = array![2.0, -1.0];
        let y = ResponseVector::new(x.predict(&beta)).unwrap();
        for k in 0..3 {
            assert_eq!(residual_variance(&x, &y, &beta, k).unwrap().sigma2, 0.0);
        }
        assert!(matches!(
            residual_variance(&x, &y, &beta, 3),
            Err(Error::DegreesOfFreedomExhausted { k: 3, n: 3 })
        ));
    }

    #[test]
    fn scale_equivariance() {
        let x = DesignMatrix::new(array![[1.0, 0.5], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]]).unwrap();
        let y = ResponseVector::new(array![1.0, 0.3, -0.2, 4.0]).unwrap();
        let beta = array![0.7, 0.1];
        let c = -2.5;
        let a = residual_variance(&x, &y, &beta, 1).unwrap().sigma2;
        let yc = ResponseVector::new(y.values() * c).unwrap();
        let b = residual_variance(&x, &yc, &(&beta * c), 1).unwrap().sigma2;
        assert!((b - c * c * a).abs() < 1e-12 * b);
    }

    #[test]
    fn halves_partition() {
        let (a, b) = rcv_halves(21, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(b.len(), 11);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
    }

    #[test]
    fn rcv_needs_twenty_rows() {
        let x = DesignMatrix::new(Array2::eye(10)).unwrap();
        let y = ResponseVector::new(Array1::ones(10)).unwrap();
        assert!(matches!(
            rcv_variance(&x, &y, 0, &Default::default(), &Default::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
