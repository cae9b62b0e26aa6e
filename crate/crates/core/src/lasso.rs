//! Cyclic coordinate descent for `1/2 ||y - X b||^2 + lambda ||b||_1`.
//!
//! The solver keeps the full gradient `g = X^T (y - X b)` and updates it with
//! cached Gram columns `X^T x_j` whenever coefficient `j` moves ("covariance
//! updates"). Gram columns are computed the first time a coordinate becomes
//! nonzero, so memory grows with the number of ever-active columns only.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Relative tolerance on the largest coefficient change per sweep. The
    /// KKT certificate is checked at `tol * max(1, ||X^T y||_inf)`.
    pub tol: f64,
    /// Maximum number of coordinate sweeps.
    pub max_iter: usize,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub beta: Array1<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub active_set: Vec<usize>,
    pub objective: f64,
    /// Largest violation of the stationarity conditions, in gradient units.
    pub kkt_violation: f64,
    /// Coordinate sweeps used by this solve.
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn support_size(&self) -> usize {
        self.active_set.len()
    }
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `||X^T y||_inf`, the smallest penalty at which the lasso solution is zero.
pub fn lambda_max(x: &DesignMatrix, y: &ResponseVector) -> Result<f64> {
    Ok(lambda_max_with_index(x, y)?.0)
}

/// `||X^T y||_inf` and the first column attaining it. Excluded columns are
/// skipped.
pub fn lambda_max_with_index(x: &DesignMatrix, y: &ResponseVector) -> Result<(f64, usize)> {
    // same arithmetic as the solver, so `fit_lasso(lambda_max)` is exactly zero
    let solver = LassoSolver::new(x, y)?;
    let mut best = (0.0, 0);
    for (j, v) in solver.xty().iter().enumerate() {
        if !x.is_excluded(j) && v.abs() > best.0 {
            best = (v.abs(), j);
        }
    }
    Ok(best)
}

/// Fits the lasso at a single `lambda` from a zero start.
///
/// Returns [`Error::NonConvergence`] carrying the best iterate when the sweep
/// budget runs out before the KKT certificate holds.
pub fn fit_lasso(x: &DesignMatrix, y: &ResponseVector, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    check_lambda(lambda)?;
    let mut solver = LassoSolver::new(x, y)?;
    let fit = solver.solve(lambda, opts);
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::NonConvergence { fit: Box::new(fit) })
    }
}

/// Fits the lasso at each penalty in `lambdas`, warm-starting each solve from
/// the previous one. Non-converged fits are returned with `converged = false`.
pub fn fit_path(x: &DesignMatrix, y: &ResponseVector, lambdas: &[f64], opts: &LassoOptions) -> Result<Vec<LassoFit>> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    let mut solver = LassoSolver::new(x, y)?;
    Ok(lambdas.iter().map(|&l| solver.solve(l, opts)).collect())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

/// Active-set sweeps between attempts to solve the active-set equations.
const POLISH_EVERY: usize = 10;

enum Polish {
    /// The step satisfied the KKT conditions; carries the violation.
    Optimal(f64),
    /// The objective decreased, but some inactive column violates the KKT
    /// conditions.
    Improved,
    Rejected,
}

/// Reusable coordinate-descent state for one `(X, y)` pair.
///
/// Successive calls to [`LassoSolver::solve`] warm-start from the previous
/// coefficients, which is how regularization paths are computed.
pub struct LassoSolver<'a> {
    y: &'a Array1<f64>,
    /// `X^T` in row-major layout so each column of `X` is contiguous.
    xt: Array2<f64>,
    excluded: &'a [bool],
    norm2: Vec<f64>,
    xty: Array1<f64>,
    xty_inf: f64,
    gram: Vec<Option<Vec<f64>>>,
    beta: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> LassoSolver<'a> {
    pub fn new(x: &'a DesignMatrix, y: &'a ResponseVector) -> Result<Self> {
        x.check_response(y)?;
        let xt = x.values().t().as_standard_layout().into_owned();
        let norm2 = xt.rows().into_iter().map(|c| c.dot(&c)).collect();
        let xty = xt.dot(y.values());
        let xty_inf = xty
            .iter()
            .enumerate()
            .filter(|(j, _)| !x.is_excluded(*j))
            .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
        let p = x.p();
        Ok(Self {
            y: y.values(),
            grad: xty.to_vec(),
            xt,
            excluded: x.constant_columns(),
            norm2,
            xty,
            xty_inf,
            gram: vec![None; p],
            beta: vec![0.0; p],
        })
    }

    /// `||X^T y||_inf` over non-excluded columns.
    pub fn lambda_max(&self) -> f64 {
        self.xty_inf
    }

    pub fn xty(&self) -> &Array1<f64> {
        &self.xty
    }

    /// Resets the warm start to the zero vector.
    pub fn reset(&mut self) {
        self.beta.iter_mut().for_each(|b| *b = 0.0);
        self.grad.copy_from_slice(self.xty.as_slice().expect("contiguous"));
    }

    fn skip(&self, j: usize) -> bool {
        self.excluded[j] || self.norm2[j] == 0.0
    }

    /// One coordinate update; returns `|delta beta_j|`.
    #[inline]
    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let old = self.beta[j];
        let nj = self.norm2[j];
        let new = soft_threshold(self.grad[j] + nj * old, lambda) / nj;
        let delta = new - old;
        if delta == 0.0 {
            return 0.0;
        }
        self.beta[j] = new;
        if self.gram[j].is_none() {
            self.gram[j] = Some(self.xt.dot(&self.xt.row(j)).to_vec());
        }
        let col = self.gram[j].as_deref().expect("filled above");
        for (g, c) in self.grad.iter_mut().zip(col) {
            *g -= delta * c;
        }
        delta.abs()
    }

    fn sweep_all(&mut self, lambda: f64) -> (f64, bool) {
        let mut max_delta = 0.0_f64;
        let mut entered = false;
        for j in 0..self.beta.len() {
            if self.skip(j) {
                continue;
            }
            let was_zero = self.beta[j] == 0.0;
            if was_zero && self.grad[j].abs() <= lambda {
                continue;
            }
            let d = self.update(j, lambda);
            if was_zero && d > 0.0 {
                entered = true;
            }
            max_delta = max_delta.max(d * self.norm2[j].sqrt());
        }
        (max_delta, entered)
    }

    fn sweep_active(&mut self, lambda: f64, active: &[usize]) -> f64 {
        let mut max_delta = 0.0_f64;
        for &j in active {
            let d = self.update(j, lambda);
            max_delta = max_delta.max(d * self.norm2[j].sqrt());
        }
        max_delta
    }

    fn active(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    fn residual(&self) -> Array1<f64> {
        let mut r = self.y.clone();
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                r.scaled_add(-b, &self.xt.row(j));
            }
        }
        r
    }

    /// Recomputes the gradient from scratch to remove accumulated drift.
    fn resync(&mut self) -> Array1<f64> {
        let r = self.residual();
        let g = self.xt.dot(&r);
        self.grad.copy_from_slice(g.as_slice().expect("contiguous"));
        r
    }

    fn kkt_violation(&self, lambda: f64) -> f64 {
        let mut worst = 0.0_f64;
        for (j, (&b, &g)) in self.beta.iter().zip(&self.grad).enumerate() {
            if self.skip(j) {
                continue;
            }
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn objective_from(&self, r: &Array1<f64>, lambda: f64) -> f64 {
        0.5 * r.dot(r) + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn current_objective(&self, lambda: f64) -> f64 {
        self.objective_from(&self.residual(), lambda)
    }

    /// Solves at `lambda`, starting from the current coefficients.
    pub fn solve(&mut self, lambda: f64, opts: &LassoOptions) -> LassoFit {
        let kkt_tol = opts.tol * self.xty_inf.max(1.0);
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let mut kkt = f64::INFINITY;

        if opts.trace {
            trace.push(self.current_objective(lambda));
        }

        while iterations < opts.max_iter {
            let (delta, entered) = self.sweep_all(lambda);
            iterations += 1;
            if opts.trace {
                trace.push(self.current_objective(lambda));
            }
            let scale = self.beta_scale();
            if delta <= opts.tol * scale && !entered {
                self.resync();
                kkt = self.kkt_violation(lambda);
                if kkt <= kkt_tol {
                    converged = true;
                    break;
                }
            }
            let active = self.active();
            let mut since_polish = 0;
            while iterations < opts.max_iter {
                let delta = self.sweep_active(lambda, &active);
                iterations += 1;
                since_polish += 1;
                if opts.trace {
                    trace.push(self.current_objective(lambda));
                }
                let settled = delta <= opts.tol * self.beta_scale();
                if settled || since_polish == POLISH_EVERY {
                    since_polish = 0;
                    match self.polish(lambda, kkt_tol) {
                        Polish::Optimal(v) => {
                            kkt = v;
                            converged = true;
                            break;
                        }
                        Polish::Improved => break,
                        Polish::Rejected if settled => break,
                        Polish::Rejected => {}
                    }
                }
            }
            if converged {
                if opts.trace {
                    trace.push(self.current_objective(lambda));
                }
                break;
            }
        }

        let r = self.resync();
        if !converged {
            kkt = self.kkt_violation(lambda);
        }
        let beta = Array1::from(self.beta.clone());
        LassoFit {
            lambda,
            active_set: self.active(),
            objective: self.objective_from(&r, lambda),
            beta,
            kkt_violation: kkt,
            iterations,
            converged,
            objective_trace: trace,
        }
    }

    /// Solves the stationarity equations `G_AA b_A = X_A' y - lambda s_A` on
    /// the current active set `A` with signs `s`. When some coordinate of the
    /// solution has the wrong sign, moves toward it up to the first sign
    /// change, drops that coordinate and solves again; the objective is a
    /// convex quadratic on the sign orthant, so every such move decreases it.
    /// The result is optimal when the KKT conditions then hold on every column.
    fn polish(&mut self, lambda: f64, kkt_tol: f64) -> Polish {
        let old = self.beta.clone();
        let mut moved = false;
        loop {
            let active = self.active();
            let k = active.len();
            if k == 0 || k > self.xt.ncols() {
                break;
            }
            let g = DMatrix::from_fn(k, k, |a, b| {
                self.gram[active[b]].as_ref().expect("active columns are cached")[active[a]]
            });
            let Some(chol) = g.cholesky() else {
                break;
            };
            let rhs = DVector::from_fn(k, |a, _| self.xty[active[a]] - lambda * self.beta[active[a]].signum());
            let z = chol.solve(&rhs);
            if z.iter().any(|v| !v.is_finite()) {
                break;
            }
            // first crossing of zero on the segment from beta to z
            let (mut t, mut hit) = (1.0, None);
            for (a, &j) in active.iter().enumerate() {
                let (b, v) = (self.beta[j], z[a]);
                if !(v * b > 0.0) {
                    let tj = b / (b - v);
                    if tj < t {
                        (t, hit) = (tj, Some(j));
                    }
                }
            }
            for (a, &j) in active.iter().enumerate() {
                self.beta[j] += t * (z[a] - self.beta[j]);
            }
            moved = true;
            match hit {
                Some(j) => self.beta[j] = 0.0,
                None => break,
            }
        }
        if !moved {
            return Polish::Rejected;
        }
        self.resync();
        let kkt = self.kkt_violation(lambda);
        if kkt <= kkt_tol {
            return Polish::Optimal(kkt);
        }
        if self.current_objective(lambda) > self.objective_with(&old, lambda) {
            self.beta = old;
            self.resync();
            return Polish::Rejected;
        }
        Polish::Improved
    }

    fn objective_with(&self, beta: &[f64], lambda: f64) -> f64 {
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                r.scaled_add(-b, &self.xt.row(j));
            }
        }
        0.5 * r.dot(&r) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `1 + max_j |b_j| ||x_j||`; coefficient changes are compared on the
    /// scale of the fitted values so the rule does not depend on column norms.
    fn beta_scale(&self) -> f64 {
        let bmax = self
            .beta
            .iter()
            .zip(&self.norm2)
            .fold(0.0_f64, |m, (b, n)| m.max(b.abs() * n.sqrt()));
        1.0 + bmax
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        for z in [-3.5, 0.0, 1e-9, 42.0] {
            assert_eq!(soft_threshold(z, 0.0), z);
        }
    }

    #[test]
    fn lambda_max_identity() {
        let x = DesignMatrix::new(Array2::eye(3)).unwrap();
        let y = ResponseVector::new(array![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(lambda_max(&x, &y).unwrap(), 2.0);
        assert_eq!(lambda_max_with_index(&x, &y).unwrap().1, 1);
        let zero = ResponseVector::new(Array1::zeros(3)).unwrap();
        assert_eq!(lambda_max(&x, &zero).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let x = DesignMatrix::new(Array2::eye(3)).unwrap();
        let y = ResponseVector::new(array![1.0, 2.0]).unwrap();
        assert!(matches!(lambda_max(&x, &y), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            fit_lasso(&x, &y, 1.0, &LassoOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_at_lambda_max() {
        let x = DesignMatrix::new(array![[1.0, 0.3], [0.2, 1.0], [0.5, -0.4]]).unwrap();
        let y = ResponseVector::new(array![1.0, -0.5, 2.0]).unwrap();
        let lmax = lambda_max(&x, &y).unwrap();
        for l in [lmax, 1.5 * lmax] {
            let fit = fit_lasso(&x, &y, l, &LassoOptions::default()).unwrap();
            assert!(fit.active_set.is_empty());
            assert!(fit.beta.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn orthonormal_is_soft_thresholding() {
        let x = DesignMatrix::new(Array2::eye(4)).unwrap();
        let y = ResponseVector::new(array![3.0, -0.5, -2.5, 1.0]).unwrap();
        let fit = fit_lasso(&x, &y, 1.0, &LassoOptions::default()).unwrap();
        assert_eq!(fit.beta, array![2.0, 0.0, -1.5, 0.0]);
        assert_eq!(fit.active_set, vec![0, 2]);
    }

    #[test]
    fn excluded_columns_stay_zero() {
        let raw = array![[1.0, 2.0], [2.0, 2.0], [3.0, 2.0], [5.0, 2.0]];
        let x = crate::design::standardize(&raw, Default::default()).unwrap();
        let y = ResponseVector::new(array![1.0, 2.0, 3.0, 4.0]).unwrap();
        let fit = fit_lasso(&x, &y, 0.1, &LassoOptions::default()).unwrap();
        assert_eq!(fit.beta[1], 0.0);
        assert_eq!(fit.active_set, vec![0]);
    }

    #[test]
    fn non_convergence_returns_iterate() {
        let x = DesignMatrix::new(array![[1.0, 0.99], [0.99, 1.0], [0.5, 0.52]]).unwrap();
        let y = ResponseVector::new(array![1.0, -1.0, 0.3]).unwrap();
        let opts = LassoOptions {
            max_iter: 1,
            tol: 1e-14,
            ..Default::default()
        };
        match fit_lasso(&x, &y, 1e-4, &opts) {
            Err(Error::NonConvergence { fit }) => {
                assert!(!fit.converged);
                assert_eq!(fit.iterations, 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn objective_matches_stored_beta() {
        let x = DesignMatrix::new(array![
            [1.0, 0.3, 0.1],
            [0.2, 1.0, 0.0],
            [0.5, -0.4, 2.0],
            [0.1, 0.1, 0.1]
        ])
        .unwrap();
        let y = ResponseVector::new(array![1.0, -0.5, 2.0, 0.3]).unwrap();
        let fit = fit_lasso(&x, &y, 0.2, &LassoOptions::default()).unwrap();
        let r = y.values() - &x.predict(&fit.beta);
        let obj = 0.5 * r.dot(&r) + 0.2 * fit.beta.iter().map(|b| b.abs()).sum::<f64>();
        assert!((obj - fit.objective).abs() <= 1e-10 * obj.abs());
    }
}
