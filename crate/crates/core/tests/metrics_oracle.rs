mod common;

use ndarray::Array2;
use proptest::prelude::*;
use swarmforge::metrics::{evaluate, ClassMetrics};
use swarmforge::{threshold_sweep, PredictionMatrix, ThresholdConfig};

struct Oracle {
    accuracy: f64,
    precision: [f64; 6],
    recall: [f64; 6],
    f1: [f64; 6],
}

/// Direct per-definition evaluation on plain nested vectors.
fn oracle(scores: &[Vec<f64>], y: &[Vec<u8>], tau: f64) -> Oracle {
    let pred: Vec<Vec<bool>> = scores
        .iter()
        .map(|r| r.iter().map(|&s| s > tau).collect())
        .collect();
    let n = y.len();
    let mut accuracy = 0.0;
    for i in 0..n {
        let agree = (0..6).filter(|&j| pred[i][j] == (y[i][j] == 1)).count();
        accuracy += agree as f64 / 6.0;
    }
    accuracy /= n as f64;

    let mut precision = [0.0; 6];
    let mut recall = [0.0; 6];
    let mut f1 = [0.0; 6];
    for j in 0..6 {
        let predicted: Vec<usize> = (0..n).filter(|&i| pred[i][j]).collect();
        let actual: Vec<usize> = (0..n).filter(|&i| y[i][j] == 1).collect();
        let hits = predicted.iter().filter(|i| actual.contains(i)).count() as f64;
        precision[j] = if predicted.is_empty() {
            0.0
        } else {
            hits / predicted.len() as f64
        };
        recall[j] = if actual.is_empty() {
            0.0
        } else {
            hits / actual.len() as f64
        };
        f1[j] = if precision[j] + recall[j] == 0.0 {
            0.0
        } else {
            2.0 * precision[j] * recall[j] / (precision[j] + recall[j])
        };
    }
    Oracle {
        accuracy,
        precision,
        recall,
        f1,
    }
}

fn random_instance(lcg: &mut common::Lcg, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<u8>>) {
    let mut scores = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let labels: Vec<u8> = (0..6).map(|_| u8::from(lcg.next_f64() < 0.35)).collect();
        // Scores correlate with labels so every metric takes non-trivial values.
        let row = labels
            .iter()
            .map(|&l| (0.3 * l as f64 + 0.7 * lcg.next_f64()).min(1.0))
            .collect();
        scores.push(row);
        y.push(labels);
    }
    (scores, y)
}

fn to_arrays(scores: &[Vec<f64>], y: &[Vec<u8>]) -> (Array2<f64>, Array2<u8>) {
    let n = y.len();
    (
        Array2::from_shape_fn((n, 6), |(i, j)| scores[i][j]),
        Array2::from_shape_fn((n, 6), |(i, j)| y[i][j]),
    )
}

fn mean(v: &[f64; 6]) -> f64 {
    v.iter().sum::<f64>() / 6.0
}

#[test]
fn matches_brute_force_oracle() {
    let mut lcg = common::Lcg(2718);
    for _ in 0..100 {
        let (scores, y) = random_instance(&mut lcg, 200);
        let (s, t) = to_arrays(&scores, &y);
        for tau in [0.3, 0.5, 0.7] {
            let got = evaluate(s.view(), t.view(), tau).unwrap();
            let want = oracle(&scores, &y, tau);
            assert!((got.multilabel_accuracy - want.accuracy).abs() <= 1e-12);
            assert!((got.macro_precision - mean(&want.precision)).abs() <= 1e-12);
            assert!((got.macro_recall - mean(&want.recall)).abs() <= 1e-12);
            assert!((got.macro_f1 - mean(&want.f1)).abs() <= 1e-12);
            for (j, c) in got.per_class.iter().enumerate() {
                assert!((c.precision - want.precision[j]).abs() <= 1e-12);
                assert!((c.recall - want.recall[j]).abs() <= 1e-12);
                assert!((c.f1 - want.f1[j]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn undefined_ratios_are_zero_and_flagged() {
    let s = Array2::from_elem((4, 6), 0.1);
    let y = Array2::zeros((4, 6));
    let r = evaluate(s.view(), y.view(), 0.5).unwrap();
    assert_eq!(r.multilabel_accuracy, 1.0);
    for c in &r.per_class {
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        assert!(!c.precision_defined && !c.recall_defined && !c.f1_defined);
    }
}

#[test]
fn threshold_bounds_are_rejected() {
    let s = Array2::from_elem((2, 6), 0.5);
    let y = Array2::zeros((2, 6));
    for tau in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(evaluate(s.view(), y.view(), tau).is_err());
    }
    let short = Array2::zeros((3, 6));
    assert!(evaluate(s.view(), short.view(), 0.5).is_err());
}

#[test]
fn csv_round_trip_and_alignment() {
    let text =
        "sample_id,p_ae_aegypti,p_ae_albopictus,p_an_arabiensis,p_an_gambiae,p_cx_quinque,p_cx_pipiens\n\
                b,0.1,0.2,0.3,0.4,0.5,0.6\n\
                a,1,0,0,0,0,0.25\n";
    let p = PredictionMatrix::read_csv(text.as_bytes()).unwrap();
    let aligned = p.aligned_to(&["a".into(), "b".into()]).unwrap();
    assert_eq!(aligned[[0, 0]], 1.0);
    assert_eq!(aligned[[1, 5]], 0.6);
    assert!(p.aligned_to(&["c".into()]).is_err());

    let bad_header = text.replacen("p_cx_pipiens", "p_other", 1);
    assert!(PredictionMatrix::read_csv(bad_header.as_bytes()).is_err());
    let out_of_range = text.replacen("0.6", "1.6", 1);
    assert!(PredictionMatrix::read_csv(out_of_range.as_bytes()).is_err());
}

#[test]
fn sweep_reports_monotone_recall() {
    let mut lcg = common::Lcg(5);
    let (scores, y) = random_instance(&mut lcg, 200);
    let (s, t) = to_arrays(&scores, &y);
    let cfg = ThresholdConfig {
        taus: vec![0.7, 0.3, 0.5, 0.9, 0.1],
    };
    let sweep = threshold_sweep(s.view(), t.view(), &cfg).unwrap();
    assert!(sweep.recall_monotone);
    assert_eq!(sweep.reports.len(), 5);
    assert_eq!(sweep.reports[0].tau, 0.7);
}

fn per_class_sorted(v: &[ClassMetrics]) -> Vec<(u64, u64, u64)> {
    let mut out: Vec<_> = v
        .iter()
        .map(|c| (c.confusion.tp, c.confusion.fp, c.confusion.fn_))
        .collect();
    out.sort();
    out
}

fn instance_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<u8>>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 6), n),
            prop::collection::vec(prop::collection::vec(0u8..=1, 6), n),
        )
    })
}

proptest! {
    #[test]
    fn recall_never_rises_with_tau((scores, y) in instance_strategy(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (s, t) = to_arrays(&scores, &y);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r_lo = evaluate(s.view(), t.view(), lo).unwrap();
        let r_hi = evaluate(s.view(), t.view(), hi).unwrap();
        prop_assert!(r_hi.macro_recall <= r_lo.macro_recall + 1e-15);
        for (p, q) in r_lo.per_class.iter().zip(&r_hi.per_class) {
            prop_assert!(q.recall <= p.recall);
        }
    }

    #[test]
    fn f1_between_min_and_max_of_p_r((scores, y) in instance_strategy(), tau in 0.01f64..0.99) {
        let (s, t) = to_arrays(&scores, &y);
        for c in evaluate(s.view(), t.view(), tau).unwrap().per_class {
            prop_assert!((0.0..=1.0).contains(&c.f1));
            if c.precision_defined && c.recall_defined {
                prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-12);
                prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
            }
        }
    }

    #[test]
    fn macro_metrics_invariant_to_column_permutation(
        (scores, y) in instance_strategy(),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        tau in 0.01f64..0.99,
    ) {
        let (s, t) = to_arrays(&scores, &y);
        let ps = Array2::from_shape_fn(s.dim(), |(i, j)| s[[i, perm[j]]]);
        let pt = Array2::from_shape_fn(t.dim(), |(i, j)| t[[i, perm[j]]]);
        let a = evaluate(s.view(), t.view(), tau).unwrap();
        let b = evaluate(ps.view(), pt.view(), tau).unwrap();
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.multilabel_accuracy - b.multilabel_accuracy).abs() < 1e-12);
        prop_assert_eq!(per_class_sorted(&a.per_class), per_class_sorted(&b.per_class));
    }
}
