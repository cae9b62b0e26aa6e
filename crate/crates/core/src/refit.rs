//! Least-squares refitting on a selected support and numerical rank.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::Result;

/// Singular values below `RANK_TOL * s_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

fn submatrix(x: &DesignMatrix, support: &[usize]) -> DMatrix<f64> {
    let v = x.values();
    DMatrix::from_fn(x.n(), support.len(), |i, k| v[[i, support[k]]])
}

/// Minimum-norm least squares of `y` on the columns in `support`, embedded in
/// a length-`p` vector that is zero off the support.
///
/// An empty support yields the zero vector (the null model).
pub fn refit_least_squares(x: &DesignMatrix, y: &ResponseVector, support: &[usize]) -> Result<Array1<f64>> {
    x.check_response(y)?;
    let mut beta = Array1::zeros(x.p());
    if support.is_empty() {
        return Ok(beta);
    }
    let a = submatrix(x, support);
    let b = DVector::from_iterator(y.len(), y.values().iter().copied());
    let coef = min_norm_solve(a, &b);
    for (k, &j) in support.iter().enumerate() {
        beta[j] = coef[k];
    }
    Ok(beta)
}

fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut coef = DVector::zeros(vt.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let w = u.column(i).dot(b) / s;
            coef.axpy(w, &vt.row(i).transpose(), 1.0);
        }
    }
    coef
}

/// Numerical rank of the columns of `x` indexed by `support`.
pub fn support_rank(x: &DesignMatrix, support: &[usize]) -> usize {
    if support.is_empty() {
        return 0;
    }
    let sv = submatrix(x, support).singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}
