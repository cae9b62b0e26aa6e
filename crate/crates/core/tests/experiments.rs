use qut::experiments::report::ExperimentReport;
use qut::experiments::split::synthetic_dataset;
use qut::experiments::RuleSettings;
use qut::{
    run_phase_transition, run_split_eval, run_synthetic, PhaseTransitionConfig, Rule, SplitEvalConfig, SyntheticConfig,
};

fn without_runtime(mut r: ExperimentReport) -> ExperimentReport {
    r.metadata.remove("runtime_seconds");
    r
}

fn small_phase() -> PhaseTransitionConfig {
    PhaseTransitionConfig {
        p: 60,
        n_grid: vec![24, 48],
        rho_grid: vec![0.05, 0.25, 0.5, 1.0],
        replications: 6,
        rules: vec![Rule::Qut, Rule::Cv],
        settings: RuleSettings {
            qut_m: 200,
            grid_size: 40,
            ..Default::default()
        },
        oracle_grid_size: 60,
        keep_records: true,
        ..Default::default()
    }
}

#[test]
fn phase_is_reproducible() {
    let cfg = small_phase();
    let a = without_runtime(run_phase_transition(&cfg).unwrap());
    let b = without_runtime(run_phase_transition(&cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn phase_cells_do_not_depend_on_other_cells() {
    let all = run_phase_transition(&small_phase()).unwrap();
    let only = run_phase_transition(&PhaseTransitionConfig {
        n_grid: vec![48],
        rho_grid: vec![0.25],
        ..small_phase()
    })
    .unwrap();
    let pick = |r: &ExperimentReport| {
        r.cell(|c| c.param("n") == Some(48.0) && c.param("rho_target") == Some(0.25))
            .unwrap()
            .clone()
    };
    assert_eq!(pick(&all), pick(&only));
}

/// Along fixed N, oracle inclusion frequency does not increase with rho
/// beyond three binomial standard errors.
#[test]
fn inclusion_is_monotone_in_rho() {
    let cfg = PhaseTransitionConfig {
        p: 100,
        n_grid: vec![60],
        rho_grid: vec![0.05, 0.15, 0.3, 0.5, 0.75, 1.0],
        replications: 40,
        rules: vec![Rule::Qut],
        oracle_grid_size: 100,
        ..Default::default()
    };
    let report = run_phase_transition(&cfg).unwrap();
    let freq: Vec<f64> = report
        .cells
        .iter()
        .filter(|c| !c.skipped)
        .map(|c| c.methods["oracle"].inclusion_frequency.unwrap())
        .collect();
    for w in freq.windows(2) {
        let se = |f: f64| (f * (1.0 - f) / 40.0).sqrt();
        let slack = 3.0 * (se(w[0]).powi(2) + se(w[1]).powi(2)).sqrt();
        assert!(w[1] <= w[0] + slack.max(1.0 / 40.0), "{freq:?}");
    }
    assert!(freq[0] > freq[freq.len() - 1]);
}

#[test]
fn synthetic_is_reproducible_and_round_trips() {
    let cfg = SyntheticConfig {
        n: 40,
        p: 60,
        replications: 3,
        rules: vec![Rule::Qut, Rule::Bic],
        settings: RuleSettings {
            qut_m: 200,
            grid_size: 40,
            ..Default::default()
        },
        keep_records: true,
        ..Default::default()
    };
    let a = run_synthetic(&cfg).unwrap();
    let b = run_synthetic(&cfg).unwrap();
    assert_eq!(without_runtime(a.clone()), without_runtime(b));

    let mut buf = Vec::new();
    a.write_json(&mut buf).unwrap();
    assert_eq!(ExperimentReport::read_json(buf.as_slice()).unwrap(), a);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let rows = qut::experiments::report::read_csv_rows(csv.as_slice()).unwrap();
    let qut_rows: Vec<_> = rows.iter().filter(|r| r["method"] == "qut").collect();
    assert_eq!(qut_rows.len(), 1);
    let tpr: f64 = qut_rows[0]["tpr_mean"].parse().unwrap();
    assert_eq!(tpr, a.cells[0].methods["qut"].tpr.unwrap().mean);
}

/// A stand-in for a wide real dataset: 71 rows, 4088 noise columns, a few
/// planted signals.
#[test]
fn split_eval_qut_is_sparser_than_cv() {
    let data = synthetic_dataset(71, 4088, 5, 1.5, 3).unwrap();
    let cfg = SplitEvalConfig {
        repetitions: 5,
        rules: vec![Rule::Qut, Rule::Cv],
        ..Default::default()
    };
    let report = run_split_eval(&data, &cfg).unwrap();
    let m = &report.cells[0].methods;
    assert!(m["qut"].support_size.unwrap().median <= m["cv"].support_size.unwrap().median);
}

#[test]
fn split_eval_small_training_fraction_completes() {
    let data = synthetic_dataset(250, 400, 5, 2.0, 9).unwrap();
    let cfg = SplitEvalConfig {
        train_fraction: 0.1,
        repetitions: 3,
        settings: RuleSettings {
            qut_m: 200,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_split_eval(&data, &cfg).unwrap();
    let m = &report.cells[0].methods;
    assert_eq!(m.len(), Rule::ALL.len());
    for s in m.values() {
        assert_eq!(s.replications, 3);
        assert!(s.predictive_risk.unwrap().mean.is_finite());
    }
}
