//! The quantile universal threshold and closed-form reference thresholds.
//!
//! Under the null model `Y ~ N(0, I_N)` the lasso returns the zero vector
//! exactly when `lambda >= ||X^T Y||_inf`. The quantile universal threshold is
//! `sigma` times the `1 - alpha_P` quantile of that statistic, with
//! `alpha_P = 1 / sqrt(pi ln P)`, estimated here by Monte Carlo.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Null draws processed per matrix product.
const BLOCK: usize = 256;

pub const DEFAULT_MC_SIZE: usize = 1000;
pub const MIN_MC_SIZE: usize = 100;

/// Upper clamp for the null-rejection level at small `P`.
pub const ALPHA_CAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullQuantileEstimate {
    pub lambda_qut: f64,
    /// `lambda_qut / sigma`, the quantile of the unit-variance statistic.
    pub unit_quantile: f64,
    pub alpha: f64,
    pub m: usize,
    pub seed: u64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl NullQuantileEstimate {
    /// The same null sample rescaled to another noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            lambda_qut: sigma * self.unit_quantile,
            sigma,
            ..self.clone()
        }
    }
}

/// `1 / sqrt(pi ln P)` capped at [`ALPHA_CAP`].
pub fn alpha_p(p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidDimension(format!("alpha_P needs P >= 2, got {p}")));
    }
    Ok(alpha_continuous(p as f64))
}

/// [`alpha_p`] for a real-valued dimension (`P > 1`).
pub fn alpha_continuous(p: f64) -> f64 {
    (1.0 / (std::f64::consts::PI * p.ln()).sqrt()).min(ALPHA_CAP)
}

/// `sigma sqrt(2 ln N)`, the threshold for orthonormal designs.
pub fn universal_threshold(n: usize, sigma: f64) -> f64 {
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

/// `2 ln N`: the hard-thresholding penalty matching the quantile universal
/// threshold. It always exceeds the BIC penalty `ln N`.
pub fn qut_l0_reference(n: f64) -> f64 {
    2.0 * n.ln()
}

/// One-based rank of the empirical `level` quantile among `m` sorted values:
/// `ceil(level * m)`, clamped to `1..=m`.
pub fn quantile_rank(level: f64, m: usize) -> usize {
    // tolerate rounding in products like 0.8 * 1000
    let r = (level * m as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(m)
}

/// Empirical `level` quantile (order statistic at [`quantile_rank`]).
pub fn empirical_quantile(samples: &[f64], level: f64) -> f64 {
    assert!(!samples.is_empty(), "empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[quantile_rank(level, sorted.len()) - 1]
}

/// Draws `m` values of `||X^T y||_inf` with `y ~ N(0, I_N)`.
///
/// Replicate `i` uses its own substream of `seed`, so the sample does not
/// depend on how the work is split across threads.
pub fn null_statistic_sample(x: &DesignMatrix, m: usize, seed: u64) -> Vec<f64> {
    let n = x.n();
    let xt = x.values().t().as_standard_layout().into_owned();
    let excluded = x.constant_columns();
    let starts: Vec<usize> = (0..m).step_by(BLOCK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let width = BLOCK.min(m - start);
            let mut ys = Array2::zeros((n, width));
            for (b, mut col) in ys.columns_mut().into_iter().enumerate() {
                let mut r = rng::substream(seed, &[tag::NULL_DRAW, (start + b) as u64]);
                col.assign(&rng::normal_vector(&mut r, n));
            }
            let z = xt.dot(&ys);
            (0..width)
                .map(|b| {
                    z.column(b)
                        .iter()
                        .zip(excluded)
                        .filter(|(_, ex)| !**ex)
                        .fold(0.0_f64, |acc, (v, _)| acc.max(v.abs()))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutOptions {
    pub m: usize,
    pub seed: u64,
    /// Overrides `alpha_P` when set.
    pub alpha: Option<f64>,
    pub retain_samples: bool,
}

impl Default for QutOptions {
    fn default() -> Self {
        Self {
            m: DEFAULT_MC_SIZE,
            seed: 0,
            alpha: None,
            retain_samples: false,
        }
    }
}

/// Monte Carlo estimate of `sigma F^{-1}(1 - alpha_P)` for the design `x`.
pub fn qut_monte_carlo(x: &DesignMatrix, sigma: f64, m: usize, seed: u64) -> Result<NullQuantileEstimate> {
    qut_with_options(
        x,
        sigma,
        &QutOptions {
            m,
            seed,
            ..Default::default()
        },
    )
}

pub fn qut_with_options(x: &DesignMatrix, sigma: f64, opts: &QutOptions) -> Result<NullQuantileEstimate> {
    if opts.m < MIN_MC_SIZE {
        return Err(Error::TooFewReplicates(opts.m));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let alpha = match opts.alpha {
        Some(a) if a > 0.0 && a < 1.0 => a,
        Some(a) => return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {a}"))),
        None => alpha_p(x.p())?,
    };
    let samples = null_statistic_sample(x, opts.m, opts.seed);
    let q = empirical_quantile(&samples, 1.0 - alpha);
    Ok(NullQuantileEstimate {
        lambda_qut: sigma * q,
        unit_quantile: q,
        alpha,
        m: opts.m,
        seed: opts.seed,
        sigma,
        samples: opts.retain_samples.then_some(samples),
    })
}
