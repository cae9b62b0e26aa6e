use std::fs::File;
use std::io::BufWriter;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qut::abel::{run_abel_experiment, write_method_table_csv, AbelConfig};
use qut::experiments::{run_phase_transition, run_split_eval, run_synthetic, ExperimentReport};
use qut::grid::LambdaGrid;
use qut::io::{read_matrix_path, read_vector_path, write_coefficients, TabularDataset};
use qut::selectors::{
    select_bic, select_cv, select_qut, select_scaled_lasso, select_sure, Rule, ScaledLassoOptions, SelectionOutcome,
};
use qut::thresholds::{qut_with_options, QutOptions};
use qut::variance::{rcv_variance, residual_variance, RcvOptions};
use qut::{standardize, DesignMatrix, LassoOptions, ResponseVector, StandardizeOptions};

use crate::config::{CliError, CliResult, NumOr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub design: Option<String>,
    pub response: Option<String>,
    /// Scale columns to unit variance before fitting; coefficients are
    /// reported in the original units.
    pub standardize: bool,
}

impl Default for DataParams {
    fn default() -> Self {
        Self {
            design: None,
            response: None,
            standardize: true,
        }
    }
}

impl DataParams {
    fn design(&self) -> CliResult<DesignMatrix> {
        let path = self
            .design
            .as_ref()
            .ok_or_else(|| CliError::Config("--design is required".into()))?;
        let raw = read_matrix_path(path)?;
        Ok(if self.standardize {
            standardize(&raw, StandardizeOptions::default())?
        } else {
            DesignMatrix::new(raw)?
        })
    }

    fn response(&self, x: &DesignMatrix) -> CliResult<ResponseVector> {
        let path = self
            .response
            .as_ref()
            .ok_or_else(|| CliError::Config("--response is required".into()))?;
        let y = ResponseVector::new(read_vector_path(path)?)?;
        if y.len() != x.n() {
            return Err(CliError::Config(format!(
                "response has {} rows but the design has {}",
                y.len(),
                x.n()
            )));
        }
        Ok(y)
    }
}

fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// Resolves `--sigma`: a positive number or `rcv`.
fn resolve_sigma(spec: &NumOr, x: &DesignMatrix, y: &ResponseVector, seed: u64) -> CliResult<(f64, Value)> {
    match spec {
        NumOr::Num(s) => {
            check_positive("sigma", *s)?;
            Ok((*s, json!({"source": "given", "sigma": s})))
        }
        NumOr::Word(w) if w == "rcv" => {
            let est = rcv_variance(x, y, seed, &RcvOptions::default(), &LassoOptions::default())?;
            Ok((
                est.sigma(),
                json!({"source": "rcv", "sigma": est.sigma(), "estimate": est}),
            ))
        }
        NumOr::Word(w) => Err(CliError::Config(format!("sigma must be a number or 'rcv', got '{w}'"))),
    }
}

fn check_sigma_spec(spec: &NumOr) -> CliResult<()> {
    match spec {
        NumOr::Num(s) => check_positive("sigma", *s),
        NumOr::Word(w) if w == "rcv" => Ok(()),
        NumOr::Word(w) => Err(CliError::Config(format!("sigma must be a number or 'rcv', got '{w}'"))),
    }
}

fn write_selection(out: Option<&String>, x: &DesignMatrix, s: &SelectionOutcome) -> CliResult<()> {
    if let Some(path) = out {
        let refit = x.to_original_units(&s.beta_refit);
        let lasso = x.to_original_units(&s.beta_lasso);
        write_coefficients(BufWriter::new(File::create(path)?), &refit, &lasso, &s.support)?;
    }
    Ok(())
}

fn selection_json(x: &DesignMatrix, s: &SelectionOutcome) -> Value {
    json!({
        "rule": s.rule,
        "lambda": s.lambda,
        "support": s.support,
        "support_size": s.support.len(),
        "coefficients": x.to_original_units(&s.beta_refit).to_vec(),
        "sigma": s.sigma_used,
    })
}

// ---- qut ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QutParams {
    #[serde(flatten)]
    pub data: DataParams,
    pub sigma: f64,
    pub m: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
}

impl Default for QutParams {
    fn default() -> Self {
        Self {
            data: DataParams::default(),
            sigma: 1.0,
            m: qut::thresholds::DEFAULT_MC_SIZE,
            seed: 0,
            alpha: None,
        }
    }
}

pub fn run_qut(p: &QutParams) -> CliResult<Value> {
    check_positive("sigma", p.sigma)?;
    if p.m < qut::thresholds::MIN_MC_SIZE {
        return Err(CliError::Config(format!(
            "m must be at least {}",
            qut::thresholds::MIN_MC_SIZE
        )));
    }
    let x = p.data.design()?;
    let est = qut_with_options(
        &x,
        p.sigma,
        &QutOptions {
            m: p.m,
            seed: p.seed,
            alpha: p.alpha,
            retain_samples: false,
        },
    )?;
    Ok(json!({"lambda_qut": est.lambda_qut, "alpha": est.alpha, "unit_quantile": est.unit_quantile, "m": est.m}))
}

// ---- fit ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    #[serde(flatten)]
    pub data: DataParams,
    /// A penalty value or `qut`.
    pub lambda: NumOr,
    /// Noise level for `lambda = qut`: a number or `rcv`.
    pub sigma: NumOr,
    pub m: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub out: Option<String>,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            data: DataParams::default(),
            lambda: NumOr::Word("qut".into()),
            sigma: NumOr::Num(1.0),
            m: qut::thresholds::DEFAULT_MC_SIZE,
            seed: 0,
            tol: LassoOptions::default().tol,
            max_iter: LassoOptions::default().max_iter,
            out: None,
        }
    }
}

pub fn run_fit(p: &FitParams) -> CliResult<Value> {
    check_positive("tol", p.tol)?;
    check_sigma_spec(&p.sigma)?;
    match &p.lambda {
        NumOr::Num(l) if *l >= 0.0 && l.is_finite() => {}
        NumOr::Word(w) if w == "qut" => {}
        other => {
            return Err(CliError::Config(format!(
                "lambda must be a nonnegative number or 'qut', got {other:?}"
            )))
        }
    }
    let opts = LassoOptions {
        tol: p.tol,
        max_iter: p.max_iter,
        trace: false,
    };
    let x = p.data.design()?;
    let y = p.data.response(&x)?;
    let (outcome, sigma) = match &p.lambda {
        NumOr::Num(l) => {
            let fit = qut::fit_lasso(&x, &y, *l, &opts)?;
            let refit = qut::refit_least_squares(&x, &y, &fit.active_set)?;
            (
                SelectionOutcome {
                    rule: Rule::Qut,
                    lambda: *l,
                    support: fit.active_set.clone(),
                    beta_lasso: fit.beta,
                    beta_refit: refit,
                    sigma_used: None,
                    diagnostics: Default::default(),
                },
                Value::Null,
            )
        }
        NumOr::Word(_) => {
            let (sigma, info) = resolve_sigma(&p.sigma, &x, &y, p.seed)?;
            let est = qut_with_options(
                &x,
                sigma,
                &QutOptions {
                    m: p.m,
                    seed: p.seed,
                    ..Default::default()
                },
            )?;
            (select_qut(&x, &y, &est, &opts)?, info)
        }
    };
    write_selection(p.out.as_ref(), &x, &outcome)?;
    let mut v = selection_json(&x, &outcome);
    v["sigma_estimate"] = sigma;
    if matches!(p.lambda, NumOr::Num(_)) {
        v["rule"] = Value::Null;
    }
    Ok(v)
}

// ---- select ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectParams {
    #[serde(flatten)]
    pub data: DataParams,
    pub rule: Rule,
    pub sigma: NumOr,
    pub folds: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub m: usize,
    pub seed: u64,
    pub out: Option<String>,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            data: DataParams::default(),
            rule: Rule::Qut,
            sigma: NumOr::Word("rcv".into()),
            folds: 10,
            grid_size: qut::grid::DEFAULT_GRID_SIZE,
            grid_ratio: qut::grid::DEFAULT_GRID_RATIO,
            m: qut::thresholds::DEFAULT_MC_SIZE,
            seed: 0,
            out: None,
        }
    }
}

pub fn run_select(p: &SelectParams) -> CliResult<Value> {
    check_sigma_spec(&p.sigma)?;
    if p.grid_size == 0 || !(p.grid_ratio > 0.0 && p.grid_ratio < 1.0) {
        return Err(CliError::Config(
            "grid_size must be positive and grid_ratio in (0, 1)".into(),
        ));
    }
    let x = p.data.design()?;
    let y = p.data.response(&x)?;
    let opts = LassoOptions::default();
    let grid = || LambdaGrid::for_data_with(&x, &y, p.grid_size, p.grid_ratio);
    let mut sigma_info = Value::Null;
    let outcome = match p.rule {
        Rule::Cv => select_cv(&x, &y, &grid()?, p.folds, p.seed, &opts)?,
        Rule::ScaledLasso => select_scaled_lasso(&x, &y, &ScaledLassoOptions::default(), &opts)?,
        rule => {
            let (sigma, info) = resolve_sigma(&p.sigma, &x, &y, p.seed)?;
            sigma_info = info;
            match rule {
                Rule::Qut => {
                    let est = qut_with_options(
                        &x,
                        sigma,
                        &QutOptions {
                            m: p.m,
                            seed: p.seed,
                            ..Default::default()
                        },
                    )?;
                    select_qut(&x, &y, &est, &opts)?
                }
                Rule::Bic => select_bic(&x, &y, &grid()?, sigma, &opts)?,
                Rule::Sure => select_sure(&x, &y, &grid()?, sigma, &opts)?,
                _ => unreachable!(),
            }
        }
    };
    write_selection(p.out.as_ref(), &x, &outcome)?;
    let mut v = selection_json(&x, &outcome);
    v["sigma_estimate"] = sigma_info;
    Ok(v)
}

// ---- variance ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceChoice {
    Rcv,
    /// Least squares on all columns with `k = rank`; needs `N > P`.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceParams {
    #[serde(flatten)]
    pub data: DataParams,
    pub method: VarianceChoice,
    pub inner: Rule,
    pub folds: usize,
    pub seed: u64,
}

impl Default for VarianceParams {
    fn default() -> Self {
        Self {
            data: DataParams::default(),
            method: VarianceChoice::Rcv,
            inner: Rule::Cv,
            folds: 10,
            seed: 0,
        }
    }
}

pub fn run_variance(p: &VarianceParams) -> CliResult<Value> {
    if !matches!(p.inner, Rule::Cv | Rule::ScaledLasso) {
        return Err(CliError::Config(format!(
            "inner selector must be cv or sl, got {}",
            p.inner
        )));
    }
    let x = p.data.design()?;
    let y = p.data.response(&x)?;
    let est = match p.method {
        VarianceChoice::Rcv => rcv_variance(
            &x,
            &y,
            p.seed,
            &RcvOptions {
                inner: p.inner,
                folds: p.folds,
                ..Default::default()
            },
            &LassoOptions::default(),
        )?,
        VarianceChoice::Residual => {
            let all: Vec<usize> = (0..x.p()).collect();
            let beta: Array1<f64> = qut::refit_least_squares(&x, &y, &all)?;
            let k = qut::refit::support_rank(&x, &all);
            residual_variance(&x, &y, &beta, k)?
        }
    };
    Ok(json!({"sigma2": est.sigma2, "sigma": est.sigma(), "estimate": est}))
}

// ---- experiments ----

pub struct ReportOutputs<'a> {
    pub csv: Option<&'a String>,
    pub json: Option<&'a String>,
}

fn write_report(report: &ExperimentReport, out: &ReportOutputs<'_>) -> CliResult<()> {
    if let Some(path) = out.csv {
        report.write_csv(BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = out.json {
        report.write_json(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn report_summary(report: &ExperimentReport) -> Value {
    json!({
        "experiment": report.experiment,
        "cells": report.cells,
        "metadata": report.metadata,
    })
}

pub fn run_phase(cfg: &qut::PhaseTransitionConfig, out: &ReportOutputs<'_>) -> CliResult<Value> {
    let report = run_phase_transition(cfg)?;
    write_report(&report, out)?;
    Ok(report_summary(&report))
}

pub fn run_synthetic_cmd(cfg: &qut::SyntheticConfig, out: &ReportOutputs<'_>) -> CliResult<Value> {
    let report = run_synthetic(cfg)?;
    write_report(&report, out)?;
    Ok(report_summary(&report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub data: Option<String>,
    pub response_column: String,
    #[serde(flatten)]
    pub eval: qut::SplitEvalConfig,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            data: None,
            response_column: "y".into(),
            eval: qut::SplitEvalConfig::default(),
        }
    }
}

pub fn run_split(p: &SplitParams, out: &ReportOutputs<'_>) -> CliResult<Value> {
    let path = p
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("--data is required".into()))?;
    let data = TabularDataset::from_path(path, &p.response_column)?;
    let report = run_split_eval(&data, &p.eval)?;
    write_report(&report, out)?;
    Ok(report_summary(&report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbelParams {
    #[serde(flatten)]
    pub study: AbelConfig,
    /// Multiplies mean MSE in the table.
    pub mse_scale: f64,
}

impl Default for AbelParams {
    fn default() -> Self {
        Self {
            study: AbelConfig::default(),
            mse_scale: 1.0,
        }
    }
}

/// `csv` receives the rules-by-snr table; `json` the full report.
pub fn run_abel(p: &AbelParams, out: &ReportOutputs<'_>) -> CliResult<Value> {
    check_positive("mse_scale", p.mse_scale)?;
    let report = run_abel_experiment(&p.study)?;
    if let Some(path) = out.csv {
        write_method_table_csv(&report, p.mse_scale, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = out.json {
        report.write_json(BufWriter::new(File::create(path)?))?;
    }
    Ok(report_summary(&report))
}
