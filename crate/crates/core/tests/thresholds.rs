use ndarray::{array, Array2};
use proptest::prelude::*;
use qut::rng::{self, tag};
use qut::thresholds::{alpha_continuous, null_statistic_sample, qut_l0_reference, qut_with_options, QutOptions};
use qut::{alpha_p, qut_monte_carlo, DesignMatrix};

#[test]
fn alpha_at_1600() {
    let a = alpha_p(1600).unwrap();
    assert!((a - 0.2077).abs() < 5e-5, "{a}");
    assert_eq!(alpha_continuous(std::f64::consts::E), 0.5);
    assert!(alpha_p(1).is_err());
}

#[test]
fn l0_reference_values() {
    assert!((qut_l0_reference(512.0) - 12.477).abs() < 1e-3);
    assert!((qut_l0_reference(std::f64::consts::E.powi(2)) - 4.0).abs() < 1e-12);
    for n in 2..2000 {
        assert!(qut_l0_reference(n as f64) > (n as f64).ln());
    }
}

proptest! {
    #[test]
    fn alpha_decreases(p in 3usize..1_000_000) {
        prop_assert!(alpha_p(p + 1).unwrap() < alpha_p(p).unwrap());
    }
}

/// Re-draws the same null responses one at a time, evaluates the statistic
/// entry by entry, and takes the order statistic from a plain sort.
#[test]
fn quantile_matches_naive_reimplementation() {
    let x: Array2<f64> = array![[1.0, 0.5], [-0.3, 2.0]];
    let design = DesignMatrix::new(x.clone()).unwrap();
    let (m, seed) = (1_000_000, 99);
    let est = qut_monte_carlo(&design, 1.0, m, seed).unwrap();

    let mut stats = Vec::with_capacity(m);
    for i in 0..m {
        let y = rng::normal_vector(&mut rng::substream(seed, &[tag::NULL_DRAW, i as u64]), 2);
        let s0 = (x[[0, 0]] * y[0] + x[[1, 0]] * y[1]).abs();
        let s1 = (x[[0, 1]] * y[0] + x[[1, 1]] * y[1]).abs();
        stats.push(s0.max(s1));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let level = 1.0 - est.alpha;
    let rank = ((level * m as f64) - 1e-9).ceil() as usize;
    assert!((est.lambda_qut - stats[rank - 1]).abs() < 1e-12);
}

#[test]
fn sample_is_independent_of_blocking() {
    let x = rng::normal_matrix(&mut rng::substream(5, &[1]), 20, 30);
    let d = DesignMatrix::new(x).unwrap();
    let a = null_statistic_sample(&d, 700, 3);
    let b = null_statistic_sample(&d, 300, 3);
    assert_eq!(&a[..300], &b[..]);
}

#[test]
fn sigma_two_doubles() {
    let x = rng::normal_matrix(&mut rng::substream(6, &[1]), 30, 50);
    let d = DesignMatrix::new(x).unwrap();
    let one = qut_monte_carlo(&d, 1.0, 500, 4).unwrap();
    let two = qut_monte_carlo(&d, 2.0, 500, 4).unwrap();
    assert_eq!(two.lambda_qut, 2.0 * one.lambda_qut);
}

#[test]
fn alpha_override_validated() {
    let d = DesignMatrix::new(Array2::eye(10)).unwrap();
    let bad = QutOptions {
        alpha: Some(1.5),
        ..Default::default()
    };
    assert!(qut_with_options(&d, 1.0, &bad).is_err());
}
