use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::lasso::lambda_max;

pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;

/// Strictly decreasing, positive penalties, starting at or above
/// `||X^T y||_inf` when built from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty lambda grid".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "lambda grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "lambda grid must be strictly decreasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `size` points geometrically spaced from `top` down to `ratio * top`.
    pub fn geometric(top: f64, size: usize, ratio: f64) -> Result<Self> {
        if size == 0 || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid needs size >= 1 and ratio in (0, 1), got {size}, {ratio}"
            )));
        }
        if size == 1 {
            return Self::new(vec![top]);
        }
        let step = ratio.ln() / (size - 1) as f64;
        let mut values: Vec<f64> = (0..size).map(|i| top * (step * i as f64).exp()).collect();
        values[0] = top;
        Self::new(values)
    }

    /// The default grid for `(X, y)`: 100 points from `lambda_max` down to
    /// `1e-3 lambda_max`.
    pub fn for_data(x: &DesignMatrix, y: &ResponseVector) -> Result<Self> {
        Self::for_data_with(x, y, DEFAULT_GRID_SIZE, DEFAULT_GRID_RATIO)
    }

    pub fn for_data_with(x: &DesignMatrix, y: &ResponseVector, size: usize, ratio: f64) -> Result<Self> {
        let top = lambda_max(x, y)?;
        if top == 0.0 {
            // y orthogonal to every column: any positive grid yields the zero fit
            return Self::geometric(1.0, size, ratio);
        }
        Self::geometric(top, size, ratio)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.values.contains(&lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_endpoints() {
        let g = LambdaGrid::geometric(10.0, 100, 1e-3).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.values()[0], 10.0);
        assert!((g.values()[99] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_decreasing() {
        assert!(LambdaGrid::new(vec![1.0, 1.0]).is_err());
        assert!(LambdaGrid::new(vec![1.0, 2.0]).is_err());
        assert!(LambdaGrid::new(vec![1.0, -0.5]).is_err());
        assert!(LambdaGrid::new(vec![]).is_err());
    }
}
