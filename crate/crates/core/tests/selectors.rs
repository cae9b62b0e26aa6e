mod common;

use common::*;
use ndarray::{Array1, Array2};
use qut::experiments::synthetic::{draw_coefficients, equicorrelated_design};
use qut::rng::{self, tag};
use qut::selectors::{
    aic_value, scaled_lasso_lambda0, scaled_lasso_step, select_bic, select_bic_on_path, select_cv, select_scaled_lasso,
    select_sure, select_sure_on_path, sure_curve, ScaledLassoOptions,
};
use qut::{
    fit_path, soft_threshold, standardize, DesignMatrix, LambdaGrid, LassoOptions, LassoSolver, ResponseVector,
    StandardizeOptions,
};

fn pair(x: Array2<f64>, y: Array1<f64>) -> (DesignMatrix, ResponseVector) {
    (DesignMatrix::new(x).unwrap(), ResponseVector::new(y).unwrap())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn null_data(rep: u64, n: usize, p: usize) -> (DesignMatrix, ResponseVector) {
    pair(
        rng::normal_matrix(&mut rng::substream(1, &[tag::DESIGN, rep]), n, p),
        rng::normal_vector(&mut rng::substream(1, &[tag::NOISE, rep]), n),
    )
}

/// Under the minimum-error rule this holds in only about 68% of null
/// replicates (204/300 measured), so twenty in a row almost never happen.
#[test]
#[ignore = "min-error CV keeps more than two noise variables in about a third of null replicates"]
fn cv_on_pure_noise_selects_almost_nothing() {
    let opts = LassoOptions::default();
    for rep in 0..20 {
        let (x, y) = null_data(rep, 50, 100);
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let out = select_cv(&x, &y, &grid, 10, rep, &opts).unwrap();
        assert!(out.support.len() <= 2, "rep {rep}: {} selected", out.support.len());
    }
}

#[test]
fn cv_finds_dominant_covariate() {
    let opts = LassoOptions::default();
    let mut hits = 0;
    for rep in 0..100 {
        let x = rng::normal_matrix(&mut rng::substream(1, &[tag::DESIGN, rep]), 100, 50);
        let y = &x.column(0) * 10.0 + rng::normal_vector(&mut rng::substream(1, &[tag::NOISE, rep]), 100);
        let (x, y) = pair(x, y);
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let out = select_cv(&x, &y, &grid, 10, rep, &opts).unwrap();
        hits += out.support.contains(&0) as usize;
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn leave_one_out_runs() {
    let (x, y) = pair(gaussian(3, 10, 15), gaussian_vec(3, 10));
    let grid = LambdaGrid::for_data(&x, &y).unwrap();
    let out = select_cv(&x, &y, &grid, 10, 1, &LassoOptions::default()).unwrap();
    assert!(out.lambda > 0.0);
    assert_eq!(out.diagnostics["cv_error"].len(), grid.len());
}

#[test]
fn bic_selects_empty_model_under_null() {
    let opts = LassoOptions::default();
    let mut empty = 0;
    for rep in 0..100 {
        let (x, y) = null_data(rep, 100, 200);
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        empty += select_bic(&x, &y, &grid, 1.0, &opts).unwrap().support.is_empty() as usize;
    }
    assert!(empty >= 90, "{empty}/100");
}

#[test]
fn orthonormal_bic_no_larger_than_sure() {
    let opts = LassoOptions::default();
    for rep in 0..20 {
        let x = orthonormal(4000 + rep, 64);
        let mut beta = Array1::zeros(64);
        beta.slice_mut(ndarray::s![..6]).fill(3.0);
        let y = x.dot(&beta) + gaussian_vec(4000 + rep, 64);
        let (x, y) = pair(x, y);
        let grid = LambdaGrid::for_data(&x, &y).unwrap();
        let path = fit_path(&x, &y, grid.values(), &opts).unwrap();
        let bic = select_bic_on_path(&x, &y, &path, 1.0).unwrap();
        let sure = select_sure_on_path(&x, &y, &path, 1.0).unwrap();
        assert!(bic.support.len() <= sure.support.len());
    }
}

/// With orthonormal columns the lasso fit at every grid point is the
/// soft-thresholded `X^T y`, so SURE can be evaluated in closed form.
#[test]
fn orthonormal_sure_matches_closed_form() {
    let n = 64;
    let x = orthonormal(7, n);
    let mut beta = Array1::zeros(n);
    beta.slice_mut(ndarray::s![..8]).fill(2.5);
    let y = x.dot(&beta) + gaussian_vec(7, n);
    let z = x.t().dot(&y);
    let (xd, yd) = pair(x, y.clone());
    let grid = LambdaGrid::for_data(&xd, &yd).unwrap();
    let out = select_sure(&xd, &yd, &grid, 1.0, &LassoOptions::default()).unwrap();

    let yy = y.dot(&y);
    let closed: Vec<f64> = grid
        .values()
        .iter()
        .map(|&l| {
            let b = z.mapv(|v| soft_threshold(v, l));
            // ||y - X b||^2 = ||y||^2 - 2 z.b + ||b||^2 for orthonormal X
            let rss = yy - 2.0 * z.dot(&b) + b.dot(&b);
            rss + 2.0 * b.iter().filter(|&&v| v != 0.0).count() as f64
        })
        .collect();
    let best = closed
        .iter()
        .enumerate()
        .fold(0, |i, (j, v)| if *v < closed[i] { j } else { i });
    assert_eq!(out.lambda, grid.values()[best]);
}

#[test]
fn sure_and_aic_share_argmin_at_full_rank() {
    let (x, y) = pair(gaussian(9, 60, 20), gaussian_vec(9, 60));
    let grid = LambdaGrid::for_data(&x, &y).unwrap();
    let path = fit_path(&x, &y, grid.values(), &LassoOptions::default()).unwrap();
    let sure = sure_curve(&x, &y, &path, 1.0);
    let aic: Vec<f64> = path
        .iter()
        .map(|f| {
            let r = y.values() - &x.predict(&f.beta);
            aic_value(r.dot(&r), f.active_set.len(), 60, 1.0)
        })
        .collect();
    let offset = aic[0] - sure[0];
    for (a, s) in aic.iter().zip(&sure) {
        assert!((a - s - offset).abs() < 1e-8);
    }
}

#[test]
fn sure_at_lambda_max_is_squared_norm() {
    let (x, y) = pair(gaussian(12, 30, 40), gaussian_vec(12, 30));
    let grid = LambdaGrid::for_data(&x, &y).unwrap();
    let path = fit_path(&x, &y, grid.values(), &LassoOptions::default()).unwrap();
    let curve = sure_curve(&x, &y, &path, 1.0);
    assert!((curve[0] - y.values().dot(y.values())).abs() < 1e-12);
}

#[test]
fn scaled_lasso_is_a_fixed_point() {
    let x = gaussian(13, 80, 150);
    let mut beta = Array1::zeros(150);
    beta.slice_mut(ndarray::s![..4]).fill(2.0);
    let y = x.dot(&beta) + gaussian_vec(13, 80);
    let (x, y) = pair(x, y);
    let sl = ScaledLassoOptions::default();
    let opts = LassoOptions::default();
    let out = select_scaled_lasso(&x, &y, &sl, &opts).unwrap();
    let sigma = out.sigma_used.unwrap();
    let mut solver = LassoSolver::new(&x, &y).unwrap();
    let (_, next) = scaled_lasso_step(&mut solver, &x, &y, sigma, scaled_lasso_lambda0(150, 2), sl.a, &opts);
    assert!((next - sigma).abs() < sl.tol * sigma, "{sigma} -> {next}");
}

#[test]
fn scaled_lasso_zero_response() {
    let (x, y) = pair(gaussian(14, 20, 30), Array1::zeros(20));
    assert!(select_scaled_lasso(&x, &y, &ScaledLassoOptions::default(), &LassoOptions::default()).is_err());
}

/// N = 100, P = 1000, ceil(100^0.5) = 10 Laplace coefficients, snr = 1.
#[test]
fn scaled_lasso_noise_level_on_sparse_protocol() {
    let (n, p, k) = (100, 1000, 10);
    let mut estimates = Vec::new();
    for rep in 0..100u64 {
        let mut r = rng::substream(77, &[tag::DESIGN, rep]);
        let raw = equicorrelated_design(&mut r, n, p, 0.0);
        let x = standardize(&raw, StandardizeOptions::default()).unwrap();
        let (beta, _) = draw_coefficients(&mut rng::substream(77, &[tag::SIGNAL, rep]), p, k, 0.0, 1.0, 1.0).unwrap();
        let y = raw.dot(&beta) + rng::normal_vector(&mut rng::substream(77, &[tag::NOISE, rep]), n);
        let y = ResponseVector::new(y).unwrap();
        let out = select_scaled_lasso(&x, &y, &ScaledLassoOptions::default(), &LassoOptions::default()).unwrap();
        estimates.push(out.sigma_used.unwrap());
    }
    let m = median(estimates);
    assert!((0.7..=1.3).contains(&m), "median sigma {m}");
}
