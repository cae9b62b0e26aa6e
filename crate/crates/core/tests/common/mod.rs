#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use qut::rng;

pub fn gaussian(seed: u64, n: usize, p: usize) -> Array2<f64> {
    rng::normal_matrix(&mut rng::substream(seed, &[100]), n, p)
}

pub fn gaussian_vec(seed: u64, n: usize) -> Array1<f64> {
    rng::normal_vector(&mut rng::substream(seed, &[101]), n)
}

pub fn objective(x: &Array2<f64>, y: &Array1<f64>, beta: &Array1<f64>, lambda: f64) -> f64 {
    let r = y - &x.dot(beta);
    0.5 * r.dot(&r) + lambda * beta.mapv(f64::abs).sum()
}

/// Exact lasso minimizer by enumerating all `3^P` sign patterns. Each pattern
/// fixes the active set `A` and signs `s`; the stationarity equations
/// `X_A^T X_A b = X_A^T y - lambda s` are solved and kept when the signs of
/// `b` agree with `s`. The feasible candidate with the lowest objective wins.
pub fn brute_force_lasso(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let (n, p) = x.dim();
    let mut best = Array1::zeros(p);
    let mut best_obj = objective(x, y, &best, lambda);
    let patterns = 3usize.pow(p as u32);
    for code in 0..patterns {
        let mut signs = vec![0i32; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        if active.is_empty() || active.len() > n {
            continue;
        }
        let xa = DMatrix::from_fn(n, active.len(), |i, k| x[[i, active[k]]]);
        let yv = DVector::from_iterator(n, y.iter().copied());
        let s = DVector::from_iterator(active.len(), active.iter().map(|&j| signs[j] as f64));
        let rhs = xa.transpose() * &yv - s * lambda;
        let Some(chol) = (xa.transpose() * &xa).cholesky() else {
            continue;
        };
        let b = chol.solve(&rhs);
        if active.iter().enumerate().any(|(k, &j)| b[k] * signs[j] as f64 <= 0.0) {
            continue;
        }
        let mut beta = Array1::zeros(p);
        for (k, &j) in active.iter().enumerate() {
            beta[j] = b[k];
        }
        let obj = objective(x, y, &beta, lambda);
        if obj < best_obj {
            best_obj = obj;
            best = beta;
        }
    }
    best
}

/// Random `n x n` orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthonormal(seed: u64, n: usize) -> Array2<f64> {
    let g = gaussian(seed, n, n);
    let m = DMatrix::from_fn(n, n, |i, j| g[[i, j]]);
    let q = m.qr().q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}
