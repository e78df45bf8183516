mod common;

use friend_audit_core::evaluation::{
    chi_square_2x2, class_metrics, confusion_matrix, pearson_correlation, ClassMetrics,
    ConfusionMatrix, EvalError,
};
use friend_audit_core::synth::correlated_pairs;
use friend_audit_core::{ChiSquare, Metrics};
use proptest::prelude::*;

use common::{reported_decisions, DECISION_CLASSES};

#[test]
fn decision_matrix_ignore_class() {
    let m: Metrics = class_metrics(&reported_decisions()).unwrap();
    let i = m.index_of("ignore").unwrap();
    assert!((m.precision[i] - 0.969).abs() <= 0.001, "{}", m.precision[i]);
    assert!((m.recall[i] - 0.978).abs() <= 0.001, "{}", m.recall[i]);
    assert!((m.f_measure[i] - 0.973).abs() <= 0.001, "{}", m.f_measure[i]);
    assert_eq!(m.support, vec![921, 135, 85, 88, 223]);
}

#[test]
fn decision_matrix_weighted_f() {
    let m: Metrics = class_metrics(&reported_decisions()).unwrap();
    assert!((m.weighted_avg.f_measure - 0.732).abs() <= 0.005, "{}", m.weighted_avg.f_measure);
    assert!((m.weighted_avg.f_measure - 0.732_453_245_318_488).abs() < 1e-12);
}

#[test]
fn single_precision_agrees() {
    let m64: Metrics = class_metrics(&reported_decisions()).unwrap();
    let m32: ClassMetrics<f32> = class_metrics(&reported_decisions()).unwrap();
    assert!((m32.weighted_avg.f_measure as f64 - m64.weighted_avg.f_measure).abs() < 1e-5);
}

#[test]
fn matrix_rebuilt_from_pairs() {
    let t = reported_decisions();
    let mut pairs = Vec::new();
    for (i, actual) in DECISION_CLASSES.iter().enumerate() {
        for (j, predicted) in DECISION_CLASSES.iter().enumerate() {
            for _ in 0..t.get(i, j) {
                pairs.push((*actual, *predicted));
            }
        }
    }
    assert_eq!(pairs.len(), 1452);
    assert_eq!(confusion_matrix(&pairs, &DECISION_CLASSES).unwrap(), t);
    let empty: [(&str, &str); 0] = [];
    assert_eq!(confusion_matrix(&empty, &DECISION_CLASSES).unwrap().total(), 0);
    assert!(matches!(
        confusion_matrix(&[("unfriend", "block")], &DECISION_CLASSES),
        Err(EvalError::UnknownLabel(_))
    ));
}

#[test]
fn identity_matrix_scores_one() {
    let m = ConfusionMatrix::from_counts(&["a", "b", "c"], vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]]).unwrap();
    let metrics: Metrics = class_metrics(&m).unwrap();
    assert_eq!(metrics.weighted_avg.f_measure, 1.0);
    assert_eq!(metrics.macro_avg.precision, 1.0);
    assert!(matches!(
        class_metrics::<f64>(&ConfusionMatrix::zeros(&["a", "b"])),
        Err(EvalError::EmptyMatrix)
    ));
}

#[test]
fn chi_square_reported_tests() {
    let a: ChiSquare = chi_square_2x2([[52, 9], [12, 7]]).unwrap();
    assert!((a.statistic - 4.417).abs() <= 0.01, "{}", a.statistic);
    assert!((a.p_value - 0.036).abs() <= 0.005, "{}", a.p_value);
    assert_eq!(a.df, 1);

    let b: ChiSquare = chi_square_2x2([[50, 11], [10, 9]]).unwrap();
    assert!((b.statistic - 6.64).abs() <= 0.01, "{}", b.statistic);
    assert!((b.p_value - 0.010).abs() <= 0.003, "{}", b.p_value);
}

#[test]
fn chi_square_degenerate_margin() {
    assert!(matches!(chi_square_2x2::<f64>([[0, 0], [3, 4]]), Err(EvalError::DegenerateMargin)));
    assert!(matches!(chi_square_2x2::<f64>([[1, 0], [3, 0]]), Err(EvalError::DegenerateMargin)));
}

#[test]
fn pearson_on_generated_sample() {
    let (xs, ys): (Vec<f64>, Vec<f64>) = correlated_pairs(50_000, 0.65, 11).into_iter().unzip();
    let r: f64 = pearson_correlation(&xs, &ys).unwrap();
    assert!((r - 0.65).abs() < 0.01, "{r}");
    assert!(matches!(pearson_correlation(&[1.0, 1.0], &[2.0, 3.0]), Err(EvalError::ZeroVariance)));
}

fn arb_matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0u64..50, 3), 3)
        .prop_filter("needs a non-empty row", |m| m.iter().flatten().any(|&c| c > 0))
}

proptest! {
    #[test]
    fn scaling_counts_keeps_metrics(counts in arb_matrix(), k in 2u64..9) {
        let classes = ["a", "b", "c"];
        let base: Metrics = class_metrics(&ConfusionMatrix::from_counts(&classes, counts.clone()).unwrap()).unwrap();
        let scaled_counts = counts.iter().map(|r| r.iter().map(|c| c * k).collect()).collect();
        let scaled: Metrics = class_metrics(&ConfusionMatrix::from_counts(&classes, scaled_counts).unwrap()).unwrap();
        for (x, y) in base.f_measure.iter().zip(&scaled.f_measure) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((base.weighted_avg.f_measure - scaled.weighted_avg.f_measure).abs() < 1e-12);
    }

    #[test]
    fn relabelling_classes_permutes_metrics(counts in arb_matrix()) {
        let m: Metrics = class_metrics(&ConfusionMatrix::from_counts(&["a", "b", "c"], counts.clone()).unwrap()).unwrap();
        // swap classes a and c
        let perm = [2usize, 1, 0];
        let swapped: Vec<Vec<u64>> = (0..3).map(|i| (0..3).map(|j| counts[perm[i]][perm[j]]).collect()).collect();
        let s: Metrics = class_metrics(&ConfusionMatrix::from_counts(&["c", "b", "a"], swapped).unwrap()).unwrap();
        for class in ["a", "b", "c"] {
            let (i, j) = (m.index_of(class).unwrap(), s.index_of(class).unwrap());
            prop_assert!((m.precision[i] - s.precision[j]).abs() < 1e-12);
            prop_assert!((m.recall[i] - s.recall[j]).abs() < 1e-12);
        }
        prop_assert!((m.weighted_avg.f_measure - s.weighted_avg.f_measure).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_unit_interval(counts in arb_matrix()) {
        let m: Metrics = class_metrics(&ConfusionMatrix::from_counts(&["a", "b", "c"], counts).unwrap()).unwrap();
        for v in m.precision.iter().chain(&m.recall).chain(&m.f_measure) {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn chi_square_is_transpose_invariant(a in 1u64..60, b in 1u64..60, c in 1u64..60, d in 1u64..60) {
        let x: ChiSquare = chi_square_2x2([[a, b], [c, d]]).unwrap();
        let t: ChiSquare = chi_square_2x2([[a, c], [b, d]]).unwrap();
        prop_assert!((x.statistic - t.statistic).abs() < 1e-9 * x.statistic.max(1.0));
        prop_assert!((0.0..=1.0).contains(&x.p_value));
    }
}
