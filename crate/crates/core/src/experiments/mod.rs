//! Simulation protocols and their reports.
//!
//! Every random draw comes from a substream keyed by the run seed and the
//! cell/replicate coordinates, so a cell's results do not depend on which
//! other cells are run or on the thread count.

pub mod phase;
pub mod report;
pub mod split;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::grid::LambdaGrid;
use crate::lasso::{fit_path, LassoFit, LassoOptions};
use crate::selectors::{
    select_bic_on_path, select_cv, select_qut, select_scaled_lasso, select_sure_on_path, Rule, ScaledLassoOptions,
    SelectionOutcome,
};
use crate::thresholds::NullQuantileEstimate;

pub use phase::{run_phase_transition, PhaseTransitionConfig};
pub use report::{CellReport, ExperimentReport, MethodSummary, ReplicateRecord, Stat};
pub use split::{run_split_eval, SplitEvalConfig};
pub use synthetic::{run_synthetic, SyntheticConfig};

/// Settings shared by the selection rules inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSettings {
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub folds: usize,
    pub qut_m: usize,
}

impl Default for RuleSettings {
    fn default() -> Self {
        Self {
            grid_size: crate::grid::DEFAULT_GRID_SIZE,
            grid_ratio: crate::grid::DEFAULT_GRID_RATIO,
            folds: 10,
            qut_m: crate::thresholds::DEFAULT_MC_SIZE,
        }
    }
}

/// Runs each rule on `(x, y)`. `threshold` is the unit-noise QUT estimate
/// for `x`; rules that need a noise level use `sigma`.
pub(crate) fn apply_rules(
    x: &DesignMatrix,
    y: &ResponseVector,
    rules: &[Rule],
    sigma: Option<f64>,
    threshold: Option<&NullQuantileEstimate>,
    cv_seed: u64,
    settings: &RuleSettings,
) -> Result<Vec<SelectionOutcome>> {
    let opts = LassoOptions::default();
    let mut grid: Option<LambdaGrid> = None;
    let mut path: Option<Vec<LassoFit>> = None;
    let need_sigma =
        || sigma.ok_or_else(|| Error::InvalidParameter("a noise level is required for qut, bic and sure".into()));
    let mut out = Vec::with_capacity(rules.len());
    for &rule in rules {
        if grid.is_none() && matches!(rule, Rule::Cv | Rule::Bic | Rule::Sure) {
            grid = Some(LambdaGrid::for_data_with(
                x,
                y,
                settings.grid_size,
                settings.grid_ratio,
            )?);
        }
        if path.is_none() && matches!(rule, Rule::Bic | Rule::Sure) {
            path = Some(fit_path(x, y, grid.as_ref().expect("grid").values(), &opts)?);
        }
        out.push(match rule {
            Rule::Qut => {
                let t =
                    threshold.ok_or_else(|| Error::InvalidParameter("qut needs a null quantile estimate".into()))?;
                select_qut(x, y, &t.with_sigma(need_sigma()?), &opts)?
            }
            Rule::Cv => {
                let folds = settings.folds.min(x.n());
                select_cv(x, y, grid.as_ref().expect("grid"), folds, cv_seed, &opts)?
            }
            Rule::Bic => select_bic_on_path(x, y, path.as_ref().expect("path"), need_sigma()?)?,
            Rule::Sure => select_sure_on_path(x, y, path.as_ref().expect("path"), need_sigma()?)?,
            Rule::ScaledLasso => select_scaled_lasso(x, y, &ScaledLassoOptions::default(), &opts)?,
        });
    }
    Ok(out)
}

pub(crate) fn check_rules(rules: &[Rule]) -> Result<()> {
    if rules.is_empty() {
        return Err(Error::InvalidParameter("at least one rule is required".into()));
    }
    let mut seen = rules.to_vec();
    seen.sort();
    seen.dedup();
    if seen.len() != rules.len() {
        return Err(Error::InvalidParameter("rules must be distinct".into()));
    }
    Ok(())
}

pub(crate) fn check_replications(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidParameter("replications must be positive".into()));
    }
    Ok(())
}
