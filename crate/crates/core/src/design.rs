//! Design matrices, responses, and column standardization.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose empirical variance falls below this are treated as constant.
const CONSTANT_COLUMN_TOL: f64 = 1e-12;

/// An `n x p` covariate matrix together with the scaling that produced it.
///
/// `values` holds the columns actually used for fitting. When the matrix was
/// built by [`standardize`], `column_scale[j]` is the factor the raw column
/// was multiplied by, so a coefficient `b` on the scaled column corresponds to
/// `b * column_scale[j]` on the raw column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMatrix {
    values: Array2<f64>,
    column_scale: Array1<f64>,
    column_center: Option<Array1<f64>>,
    constant: Vec<bool>,
    standardized: bool,
}

impl DesignMatrix {
    /// Wraps a raw matrix without rescaling.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_matrix(&values)?;
        let p = values.ncols();
        Ok(Self {
            values,
            column_scale: Array1::ones(p),
            column_center: None,
            constant: vec![false; p],
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_scale(&self) -> &Array1<f64> {
        &self.column_scale
    }

    pub fn column_center(&self) -> Option<&Array1<f64>> {
        self.column_center.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Columns flagged constant during standardization. Their coefficients are
    /// held at zero by the solver.
    pub fn constant_columns(&self) -> &[bool] {
        &self.constant
    }

    pub fn is_excluded(&self, j: usize) -> bool {
        self.constant[j]
    }

    /// Maps coefficients on the scaled columns back to raw-column units.
    pub fn to_original_units(&self, beta: &Array1<f64>) -> Array1<f64> {
        beta * &self.column_scale
    }

    /// Applies this matrix's centering and scaling to new rows with the same
    /// column layout (e.g. a test split).
    pub fn transform(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} columns, got {}",
                self.p(),
                raw.ncols()
            )));
        }
        check_matrix(raw)?;
        let mut out = raw.clone();
        if let Some(center) = &self.column_center {
            out -= center;
        }
        out *= &self.column_scale;
        Ok(out)
    }

    /// Rows selected by `rows`, keeping the column metadata.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select(Axis(0), rows),
            column_scale: self.column_scale.clone(),
            column_center: self.column_center.clone(),
            constant: self.constant.clone(),
            standardized: self.standardized,
        }
    }

    /// `X beta`.
    pub fn predict(&self, beta: &Array1<f64>) -> Array1<f64> {
        self.values.dot(beta)
    }

    /// `X^T v`.
    pub fn xt_dot(&self, v: &Array1<f64>) -> Array1<f64> {
        self.values.t().dot(v)
    }

    pub(crate) fn check_response(&self, y: &ResponseVector) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {} entries",
                self.n(),
                y.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeOptions {
    /// Subtract column means before scaling.
    pub center: bool,
}

/// Scales every non-constant column to unit empirical variance.
///
/// The variance is the population variance `mean((x - mean(x))^2)`. Columns
/// are only shifted when `opts.center` is set. Constant columns are left
/// untouched and flagged so the solver keeps their coefficients at zero.
pub fn standardize(raw: &Array2<f64>, opts: StandardizeOptions) -> Result<DesignMatrix> {
    check_matrix(raw)?;
    let n = raw.nrows() as f64;
    let p = raw.ncols();
    let mut values = raw.clone();
    let mut scale = Array1::ones(p);
    let mut center = Array1::zeros(p);
    let mut constant = vec![false; p];

    for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if opts.center {
            center[j] = mean;
            col.mapv_inplace(|v| v - mean);
        }
        if var <= CONSTANT_COLUMN_TOL * (1.0 + mean * mean) {
            constant[j] = true;
            continue;
        }
        let s = 1.0 / var.sqrt();
        scale[j] = s;
        col.mapv_inplace(|v| v * s);
    }

    Ok(DesignMatrix {
        values,
        column_scale: scale,
        column_center: opts.center.then_some(center),
        constant,
        standardized: true,
    })
}

fn check_matrix(values: &Array2<f64>) -> Result<()> {
    if values.nrows() == 0 || values.ncols() == 0 {
        return Err(Error::InvalidDimension(format!(
            "design must be at least 1 x 1, got {} x {}",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("design matrix"));
    }
    Ok(())
}

/// Observed responses paired with a [`DesignMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector(Array1<f64>);

impl ResponseVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("response vector"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> ResponseVector {
        ResponseVector(self.0.select(Axis(0), rows))
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

impl From<Array1<f64>> for ResponseVector {
    /// Panics on non-finite entries; use [`ResponseVector::new`] for checked input.
    fn from(values: Array1<f64>) -> Self {
        Self::new(values).expect("finite response")
    }
}

/// The data-generating coefficients and their support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    beta0: Array1<f64>,
    support: Vec<usize>,
}

impl TrueModel {
    pub fn new(beta0: Array1<f64>) -> Self {
        let support = support_of(&beta0);
        Self { beta0, support }
    }

    pub fn beta0(&self) -> &Array1<f64> {
        &self.beta0
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Sorted indices of the nonzero entries.
pub fn support_of(beta: &Array1<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn variance_four_column_is_halved() {
        // population variance of (0, 4, 0, 4) is 4
        let raw = array![[0.0, 1.0], [4.0, 1.0], [0.0, 1.0], [4.0, 1.0]];
        let x = standardize(&raw, StandardizeOptions::default()).unwrap();
        assert_eq!(x.column_scale()[0], 0.5);
        assert_eq!(x.values()[[1, 0]], 2.0);
        assert!(!x.is_excluded(0));
    }

    #[test]
    fn constant_column_is_flagged_not_scaled() {
        let raw = array![[0.0, 3.0], [4.0, 3.0], [1.0, 3.0]];
        let x = standardize(&raw, StandardizeOptions::default()).unwrap();
        assert!(x.is_excluded(1));
        assert_eq!(x.column_scale()[1], 1.0);
        assert_eq!(x.column(1).to_vec(), vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn unit_variance_column_is_unchanged() {
        let raw = array![[1.0], [-1.0], [1.0], [-1.0]];
        let x = standardize(&raw, StandardizeOptions::default()).unwrap();
        for (a, b) in x.values().iter().zip(raw.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_columns_have_unit_variance() {
        let raw = array![[1.0, 10.0], [2.0, -3.0], [7.0, 0.5], [-4.0, 2.0], [0.3, 8.0]];
        for center in [false, true] {
            let x = standardize(&raw, StandardizeOptions { center }).unwrap();
            for col in x.values().columns() {
                let m = col.mean().unwrap();
                let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / col.len() as f64;
                assert!((v - 1.0).abs() < 1e-8);
                if center {
                    assert!(m.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transform_matches_training_scaling() {
        let raw = array![[1.0, 10.0], [2.0, -3.0], [7.0, 0.5], [-4.0, 2.0]];
        let x = standardize(&raw, StandardizeOptions { center: true }).unwrap();
        let again = x.transform(&raw).unwrap();
        for (a, b) in again.iter().zip(x.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        let raw = array![[1.0, f64::NAN]];
        assert!(matches!(
            standardize(&raw, StandardizeOptions::default()),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(ResponseVector::new(array![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn true_model_support() {
        let m = TrueModel::new(array![0.0, 2.0, 0.0, -1.0]);
        assert_eq!(m.support(), &[1, 3]);
        assert_eq!(m.sparsity(), 2);
    }
}
