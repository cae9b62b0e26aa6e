//! Command-line front end for the `qut` crate.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use qut::abel::SnrConvention;
use qut::experiments::synthetic::SigmaSource;
use qut::selectors::Rule;

use commands::*;
use config::{exit, merge, parse_list, read_config_file, CliError, CliResult, NumOr};

/// A comma-separated flag value such as `--snr 0.25,0.5,1`.
#[derive(Debug, Clone)]
struct List<T>(Vec<T>);

fn list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String>
where
    T::Err: std::fmt::Display,
{
    parse_list(s).map(List)
}

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage error (unknown flag, missing argument)
  2  invalid configuration (bad config file or parameter value)
  3  runtime failure (I/O, numerical failure)

On failure a JSON record {\"error\", \"exit_code\", \"message\"} is written to stderr.
On success the resolved configuration and the results are written to stdout as JSON.";

#[derive(Parser, Debug)]
#[command(name = "qut", version, about = "Lasso with the quantile universal threshold", after_help = EXIT_CODES)]
struct Cli {
    /// JSON file with parameters for the command; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "QUT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the lasso at a given penalty or at the QUT.
    Fit(FitArgs),
    /// Monte Carlo QUT for a design.
    Qut(QutArgs),
    /// Select the penalty with one rule.
    Select(SelectArgs),
    /// Estimate the noise variance.
    Variance(VarianceArgs),
    /// Oracle-inclusion phase transition on Gaussian designs.
    Phase(PhaseArgs),
    /// Equicorrelated designs with Laplace coefficients.
    Synthetic(SyntheticArgs),
    /// Repeated train/test splits of a CSV dataset.
    SplitEval(SplitArgs),
    /// Abel inversion study with Haar wavelets.
    Abel(AbelArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Design matrix CSV (header row, one column per covariate).
    #[arg(long)]
    design: Option<String>,
    /// Response CSV (header row, one column).
    #[arg(long)]
    response: Option<String>,
    /// Fit on the raw columns instead of unit-variance columns.
    #[arg(long)]
    no_standardize: bool,
}

impl DataArgs {
    fn apply(&self, p: &mut DataParams) {
        set(&mut p.design, self.design.clone().map(Some));
        set(&mut p.response, self.response.clone().map(Some));
        if self.no_standardize {
            p.standardize = false;
        }
    }
}

#[derive(Args, Debug)]
struct OutArgs {
    /// CSV output path.
    #[arg(long)]
    out: Option<String>,
    /// JSON report output path.
    #[arg(long)]
    json: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Penalty value, or `qut`.
    #[arg(long)]
    lambda: Option<String>,
    /// Noise level for `--lambda qut`: a number or `rcv`.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Coefficients CSV.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct QutArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    sigma: Option<f64>,
    /// Monte Carlo sample size.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the level `1 / sqrt(pi ln P)`.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// cv, qut, bic, sure or sl.
    #[arg(long)]
    rule: Option<Rule>,
    /// A number or `rcv`.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    grid_ratio: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficients CSV.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct VarianceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// rcv or residual.
    #[arg(long)]
    method: Option<String>,
    /// Selector on each RCV half: cv or sl.
    #[arg(long)]
    inner: Option<Rule>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_parser = list::<usize>)]
    n_grid: Option<List<usize>>,
    /// Comma-separated sparsity factors.
    #[arg(long, value_parser = list::<f64>)]
    rho_grid: Option<List<f64>>,
    /// Run every k from 1 to N.
    #[arg(long)]
    full_k: bool,
    /// P = 1600 and N from 160 to 1440.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated rules.
    #[arg(long, value_parser = list::<Rule>)]
    rules: Option<List<Rule>>,
    #[arg(long)]
    keep_records: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    /// Noise level for qut, bic and sure: `rcv` or `known`.
    #[arg(long)]
    sigma_source: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = list::<Rule>)]
    rules: Option<List<Rule>>,
    #[arg(long)]
    keep_records: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Dataset CSV: header row, one response column, covariates.
    #[arg(long)]
    data: Option<String>,
    /// Name of the response column.
    #[arg(long)]
    response_column: Option<String>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = list::<Rule>)]
    rules: Option<List<Rule>>,
    #[arg(long)]
    keep_records: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct AbelArgs {
    /// Comma-separated signal-to-noise ratios.
    #[arg(long, value_parser = list::<f64>)]
    snr: Option<List<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = list::<Rule>)]
    rules: Option<List<Rule>>,
    /// Amplitude factor; `--kappa 0` selects the coefficient-energy convention.
    #[arg(long)]
    kappa: Option<f64>,
    /// Multiplies mean MSE in the table.
    #[arg(long)]
    mse_scale: Option<f64>,
    #[arg(long)]
    keep_records: bool,
    #[command(flatten)]
    out: OutArgs,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn resolve<T: Serialize + serde::de::DeserializeOwned + Default>(file: &Map<String, Value>) -> CliResult<T> {
    merge(&T::default(), file)
}

fn emit<T: Serialize>(command: &str, cfg: &T, result: CliResult<Value>) -> CliResult<Value> {
    Ok(json!({
        "command": command,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "result": result?,
    }))
}

fn dispatch(cli: &Cli) -> CliResult<Value> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    match &cli.command {
        Command::Fit(a) => {
            let mut p: FitParams = resolve(&file)?;
            a.data.apply(&mut p.data);
            set(&mut p.lambda, a.lambda.as_deref().map(NumOr::parse));
            set(&mut p.sigma, a.sigma.as_deref().map(NumOr::parse));
            set(&mut p.m, a.m);
            set(&mut p.seed, a.seed);
            set(&mut p.tol, a.tol);
            set(&mut p.max_iter, a.max_iter);
            set(&mut p.out, a.out.clone().map(Some));
            emit("fit", &p, run_fit(&p))
        }
        Command::Qut(a) => {
            let mut p: QutParams = resolve(&file)?;
            a.data.apply(&mut p.data);
            set(&mut p.sigma, a.sigma);
            set(&mut p.m, a.m);
            set(&mut p.seed, a.seed);
            set(&mut p.alpha, a.alpha.map(Some));
            emit("qut", &p, run_qut(&p))
        }
        Command::Select(a) => {
            let mut p: SelectParams = resolve(&file)?;
            a.data.apply(&mut p.data);
            set(&mut p.rule, a.rule);
            set(&mut p.sigma, a.sigma.as_deref().map(NumOr::parse));
            set(&mut p.folds, a.folds);
            set(&mut p.grid_size, a.grid_size);
            set(&mut p.grid_ratio, a.grid_ratio);
            set(&mut p.m, a.m);
            set(&mut p.seed, a.seed);
            set(&mut p.out, a.out.clone().map(Some));
            emit("select", &p, run_select(&p))
        }
        Command::Variance(a) => {
            let mut p: VarianceParams = resolve(&file)?;
            a.data.apply(&mut p.data);
            if let Some(m) = &a.method {
                p.method = serde_json::from_value(Value::String(m.to_ascii_lowercase()))
                    .map_err(|_| CliError::Config(format!("method must be rcv or residual, got '{m}'")))?;
            }
            set(&mut p.inner, a.inner);
            set(&mut p.folds, a.folds);
            set(&mut p.seed, a.seed);
            emit("variance", &p, run_variance(&p))
        }
        Command::Phase(a) => {
            let defaults = if a.full_scale {
                qut::PhaseTransitionConfig::full_scale()
            } else {
                qut::PhaseTransitionConfig::default()
            };
            let mut p = merge(&defaults, &file)?;
            set(&mut p.p, a.p);
            set(&mut p.n_grid, a.n_grid.clone().map(|l| l.0));
            set(&mut p.rho_grid, a.rho_grid.clone().map(|l| l.0));
            p.full_k |= a.full_k;
            set(&mut p.amplitude, a.amplitude);
            set(&mut p.replications, a.reps);
            set(&mut p.seed, a.seed);
            set(&mut p.rules, a.rules.clone().map(|l| l.0));
            p.keep_records |= a.keep_records;
            let out = ReportOutputs {
                csv: a.out.out.as_ref(),
                json: a.out.json.as_ref(),
            };
            emit("phase", &p, run_phase(&p, &out))
        }
        Command::Synthetic(a) => {
            let mut p: qut::SyntheticConfig = resolve(&file)?;
            set(&mut p.n, a.n);
            set(&mut p.p, a.p);
            set(&mut p.omega, a.omega);
            set(&mut p.theta, a.theta);
            set(&mut p.snr, a.snr);
            if let Some(s) = &a.sigma_source {
                p.sigma_source = match s.to_ascii_lowercase().as_str() {
                    "rcv" => SigmaSource::Rcv,
                    "known" => SigmaSource::Known,
                    other => {
                        return Err(CliError::Config(format!(
                            "sigma source must be rcv or known, got '{other}'"
                        )))
                    }
                };
            }
            set(&mut p.replications, a.reps);
            set(&mut p.seed, a.seed);
            set(&mut p.rules, a.rules.clone().map(|l| l.0));
            p.keep_records |= a.keep_records;
            let out = ReportOutputs {
                csv: a.out.out.as_ref(),
                json: a.out.json.as_ref(),
            };
            emit("synthetic", &p, run_synthetic_cmd(&p, &out))
        }
        Command::SplitEval(a) => {
            let mut p: SplitParams = resolve(&file)?;
            set(&mut p.data, a.data.clone().map(Some));
            set(&mut p.response_column, a.response_column.clone());
            set(&mut p.eval.train_fraction, a.train_fraction);
            set(&mut p.eval.repetitions, a.reps);
            set(&mut p.eval.seed, a.seed);
            set(&mut p.eval.rules, a.rules.clone().map(|l| l.0));
            p.eval.keep_records |= a.keep_records;
            let out = ReportOutputs {
                csv: a.out.out.as_ref(),
                json: a.out.json.as_ref(),
            };
            emit("split-eval", &p, run_split(&p, &out))
        }
        Command::Abel(a) => {
            let mut p: AbelParams = resolve(&file)?;
            set(&mut p.study.snr, a.snr.clone().map(|l| l.0));
            set(&mut p.study.replications, a.reps);
            set(&mut p.study.seed, a.seed);
            set(&mut p.study.n, a.n);
            set(&mut p.study.rules, a.rules.clone().map(|l| l.0));
            match a.kappa {
                Some(k) if k == 0.0 => p.study.snr_convention = SnrConvention::CoefficientEnergy,
                Some(k) if k > 0.0 => p.study.snr_convention = SnrConvention::Amplitude { kappa: k },
                Some(k) => return Err(CliError::Config(format!("kappa must be nonnegative, got {k}"))),
                None => {}
            }
            set(&mut p.mse_scale, a.mse_scale);
            p.study.keep_records |= a.keep_records;
            let out = ReportOutputs {
                csv: a.out.out.as_ref(),
                json: a.out.json.as_ref(),
            };
            emit("abel", &p, run_abel(&p, &out))
        }
    }
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.record());
    std::process::exit(e.code());
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(exit::OK);
            }
            fail(CliError::Usage(e.to_string().trim().to_string()));
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        fail(e);
    }
    match dispatch(&cli) {
        Ok(v) => println!("{}", serde_json::to_string_pretty(&v).expect("json output")),
        Err(e) => fail(e),
    }
}
