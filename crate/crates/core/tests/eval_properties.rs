use lecomh::data::{annotate, gen_blobs};
use lecomh::eval::{
    baseline_confidence_deferral, baselines_simple, curve_to_csv, emit_curve, evaluate_system,
    parse_curve, sweep_legs, sweep_lambda, CoveragePoint, EvalSummary, SweepData,
};
use lecomh::lecomh::{CollabNet, LecomhModel, SelectionMode, SelectionNet};
use lecomh::nnet::{Matrix, Mlp};
use lecomh::pretrain::evaluate_classifier;
use lecomh::Error;

mod support;

use support::fixtures::{self, lecomh_config, small_pipeline, Pipeline};

/// Selection always picks format `k`; the head copies the AI slot when
/// `k = 0` and votes on annotation slots otherwise.
fn stub_model(p: &Pipeline, k: usize) -> LecomhModel {
    let (c, m, d) = (4, 3, 16);
    let mut bias = vec![0.0; m + 1];
    bias[k] = 50.0;
    let sel = SelectionNet {
        net: Mlp::from_parts(vec![Matrix::zeros(d, m + 1)], vec![bias]).unwrap(),
    };
    let mut w = Matrix::zeros((m + 1) * c, c);
    for j in 0..=m {
        for y in 0..c {
            w.set(j * c + y, y, if j == 0 { 0.5 } else { 10.0 });
        }
    }
    let collab = CollabNet {
        net: Mlp::from_parts(vec![w], vec![vec![0.0; c]]).unwrap(),
    };
    LecomhModel::new(p.classifier.clone(), sel, collab, 5.0).unwrap()
}

#[test]
fn always_ai_alone_reproduces_classifier() {
    let p = small_pipeline(11);
    let model = stub_model(&p, 0);
    let (records, s) = evaluate_system(&model, &p.test, 1, SelectionMode::Argmax).unwrap();
    assert_eq!(s.coverage, 1.0);
    assert_eq!(s.mean_cost, 0.0);
    assert_eq!(s.accuracy, evaluate_classifier(&p.classifier, &p.test).unwrap());
    assert_eq!(records.len(), p.test.len());
}

#[test]
fn always_all_annotators_has_zero_coverage() {
    let p = small_pipeline(11);
    let model = stub_model(&p, 3);
    let (records, s) = evaluate_system(&model, &p.test, 1, SelectionMode::Sampled).unwrap();
    assert_eq!(s.coverage, 0.0);
    assert_eq!(s.mean_cost, 3.0);
    let n = records.len() as f64;
    let k0 = records.iter().filter(|r| r.chosen_index == 0).count() as f64;
    assert_eq!(s.coverage, k0 / n);
    assert_eq!(s, EvalSummary::from_records(&records));
}

#[test]
fn evaluation_is_deterministic_per_seed() {
    let p = small_pipeline(12);
    let (model, _) =
        lecomh::lecomh::train_lecomh(&p.consensus, &p.classifier, &lecomh_config(3, 16), 1).unwrap();
    for mode in [SelectionMode::Argmax, SelectionMode::Sampled] {
        let a = evaluate_system(&model, &p.test, 5, mode).unwrap();
        let b = evaluate_system(&model, &p.test, 5, mode).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn pool_smaller_than_slots_is_rejected() {
    let p = small_pipeline(13);
    let model = stub_model(&p, 1);
    let (_, test) = gen_blobs(&fixtures::benchmark_blobs(10, 50), 1).unwrap();
    let test = annotate(&test, &fixtures::symmetric(&[0.9, 0.9], 4), 1).unwrap();
    let err = evaluate_system(&model, &test, 0, SelectionMode::Argmax).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn larger_pool_draws_subsets_without_replacement() {
    let p = small_pipeline(14);
    let model = stub_model(&p, 3);
    let (_, test) = gen_blobs(&fixtures::benchmark_blobs(10, 300), 2).unwrap();
    let test = annotate(&test, &fixtures::symmetric(&[1.0; 6], 4), 2).unwrap();
    let (_, s) = evaluate_system(&model, &test, 0, SelectionMode::Argmax).unwrap();
    assert_eq!(s.accuracy, 1.0);
}

#[test]
fn sweep_aggregates_trials_with_standard_error() {
    let p = small_pipeline(15);
    let data = SweepData {
        consensus: &p.consensus,
        classifier: &p.classifier,
        test: &p.test,
    };
    let cfg = lecomh_config(3, 16);
    let single = sweep_lambda(data, &cfg, &[0.1], &[4]).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].accuracy_std, 0.0);
    assert_eq!(single[0].trials, 1);

    let seeds = [1, 2, 3, 4, 5];
    let legs = sweep_legs(data, &cfg, &[0.0], &seeds).unwrap();
    let accs: Vec<f64> = legs.iter().map(|l| l.summary.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / 5.0;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 4.0;
    let point = sweep_lambda(data, &cfg, &[0.0], &seeds).unwrap()[0];
    assert!((point.accuracy - mean).abs() < 1e-15);
    assert!((point.accuracy_std - (var / 5.0).sqrt()).abs() < 1e-15);
}

#[test]
fn large_lambda_raises_coverage_in_paired_runs() {
    let p = small_pipeline(16);
    let data = SweepData {
        consensus: &p.consensus,
        classifier: &p.classifier,
        test: &p.test,
    };
    let points = sweep_lambda(data, &lecomh_config(15, 32), &[100.0, 0.0], &[9]).unwrap();
    assert_eq!(points[0].lambda, 0.0);
    assert!(points[1].coverage > points[0].coverage);
}

#[test]
fn deferral_endpoints_match_simple_baselines() {
    let p = small_pipeline(17);
    let simple = baselines_simple(&p.test, &p.classifier, 3).unwrap();
    let defer = baseline_confidence_deferral(&p.classifier, &p.test, &[1.0, 0.5, 0.0]).unwrap();
    assert_eq!(defer[0].accuracy, simple[0].accuracy);
    assert_eq!(defer[2].accuracy, simple[2].accuracy);
    assert_eq!(defer[0].cost, 0.0);
    assert_eq!(defer[2].cost, 3.0);
    // confident half answered by the AI, the rest by the vote: never worse
    // than the weaker endpoint, and here better than both
    let lo = simple[0].accuracy.min(simple[2].accuracy);
    assert!(defer[1].accuracy >= lo, "{defer:?} {simple:?}");
    assert_eq!(defer[1].coverage, 0.5);
    assert_eq!(defer[1].cost, 1.5);
    assert_eq!(simple[0].accuracy, evaluate_classifier(&p.classifier, &p.test).unwrap());
}

#[test]
fn perfect_annotators_make_a_perfect_human_row() {
    let p = small_pipeline(18);
    let (_, test) = gen_blobs(&fixtures::benchmark_blobs(10, 200), 3).unwrap();
    let test = annotate(&test, &fixtures::symmetric(&[1.0; 3], 4), 3).unwrap();
    let rows = baselines_simple(&test, &p.classifier, 0).unwrap();
    assert_eq!(rows[1].name, "human");
    assert_eq!(rows[1].accuracy, 1.0);
    assert_eq!(rows[1].cost, 1.0);
}

/// Exact probability that a lowest-index-tie majority vote over independent
/// symmetric annotators recovers a uniformly drawn true class.
fn majority_vote_accuracy_exact(accs: &[f64], c: usize) -> f64 {
    let m = accs.len();
    let mut total = 0.0;
    for y in 0..c {
        for code in 0..c.pow(m as u32) {
            let labels: Vec<usize> = (0..m).map(|j| code / c.pow(j as u32) % c).collect();
            let prob: f64 = labels
                .iter()
                .zip(accs)
                .map(|(&l, &a)| if l == y { a } else { (1.0 - a) / (c - 1) as f64 })
                .product();
            let mut counts = vec![0; c];
            labels.iter().for_each(|&l| counts[l] += 1);
            let best = (0..c).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
            if best == y {
                total += prob / c as f64;
            }
        }
    }
    total
}

#[test]
fn majority_vote_row_matches_exact_oracle() {
    let (_, test) = gen_blobs(&fixtures::benchmark_blobs(10, 2000), 21).unwrap();
    let test = annotate(&test, &fixtures::symmetric(&fixtures::BENCH_ACCURACIES, 4), 21).unwrap();
    let p = small_pipeline(19);
    let rows = baselines_simple(&test, &p.classifier, 0).unwrap();
    let expected = majority_vote_accuracy_exact(&fixtures::BENCH_ACCURACIES, 4);
    assert!((rows[2].accuracy - expected).abs() < 0.015, "{} vs {expected}", rows[2].accuracy);
}

#[test]
fn curve_csv_is_sorted_and_round_trips() {
    let pts = vec![
        CoveragePoint {
            lambda: 1.0,
            coverage: 0.9,
            mean_cost: 0.1 + 0.2,
            accuracy: 1.0 / 3.0,
            accuracy_std: 1e-17,
            trials: 5,
        },
        CoveragePoint {
            lambda: 0.0,
            coverage: 0.1,
            mean_cost: 2.7,
            accuracy: 0.95,
            accuracy_std: 0.0,
            trials: 5,
        },
    ];
    let text = curve_to_csv(&pts);
    let back = parse_curve(&text, "mem").unwrap();
    assert_eq!(back, vec![pts[1], pts[0]]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    emit_curve(&pts[..1], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    let err = emit_curve(&pts, &dir.path().join("missing/curve.csv")).unwrap_err();
    assert!(err.to_string().contains("missing"));
}

