use eapred::evaluation::{
    ablation_report, confusion, confusion_indices, custom_cost, metrics, render_table, ConfusionMatrix, CostMatrix,
    EvalError, EvaluationReport, Movement, ReportMeta,
};
use eapred::labeling::Direction;
use eapred::models::ModelKind;
use eapred::numerics::RngStream;
use proptest::prelude::*;

use Direction::{Down, Neutral, Up};

fn cm(counts: [[u64; 3]; 3]) -> ConfusionMatrix {
    ConfusionMatrix { counts }
}

fn meta(model: ModelKind, sentiment: bool) -> ReportMeta {
    ReportMeta {
        model,
        sentiment,
        seed: 1,
        tau: 0.03,
        split: "test".into(),
        split_digest: "abc".into(),
    }
}

/// Everything recomputed straight from the definitions.
struct Oracle {
    accuracy: f64,
    precision: [f64; 3],
    recall: [f64; 3],
    f1: [f64; 3],
    macro_f1: f64,
    cost: f64,
}

fn oracle(m: &[[u64; 3]; 3], costs: &[[f64; 3]; 3]) -> Oracle {
    let n: u64 = m.iter().flatten().sum();
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    let mut f1 = [0.0; 3];
    for k in 0..3 {
        let tp = m[k][k] as f64;
        let predicted: u64 = (0..3).map(|i| m[i][k]).sum();
        let actual: u64 = m[k].iter().sum();
        let fp = predicted as f64 - tp;
        let fn_ = actual as f64 - tp;
        precision[k] = if predicted == 0 { 0.0 } else { tp / (tp + fp) };
        recall[k] = if actual == 0 { 0.0 } else { tp / (tp + fn_) };
        // F1 = 2TP / (2TP + FP + FN)
        f1[k] = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    let mut cost = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            cost += m[i][j] as f64 * costs[i][j];
        }
    }
    Oracle {
        accuracy: (0..3).map(|k| m[k][k]).sum::<u64>() as f64 / n as f64,
        precision,
        recall,
        f1,
        macro_f1: f1.iter().sum::<f64>() / 3.0,
        cost: cost / n as f64,
    }
}

#[test]
fn confusion_examples() {
    let perfect = confusion(&[Up, Down, Neutral, Neutral], &[Up, Down, Neutral, Neutral]).unwrap();
    assert_eq!(perfect.counts, [[1, 0, 0], [0, 1, 0], [0, 0, 2]]);
    let one = confusion(&[Up], &[Down]).unwrap();
    assert_eq!(one.counts[0][1], 1);
    assert_eq!(one.total(), 1);
    assert!(matches!(confusion(&[Up], &[]), Err(EvalError::LengthMismatch(1, 0))));
    assert!(matches!(confusion_indices(&[0, 3], &[0, 1]), Err(EvalError::BadLabel(3))));
}

#[test]
fn confusion_matches_tally_oracle() {
    let mut rng = RngStream::named(1, "pairs");
    let truth: Vec<usize> = (0..1000).map(|_| rng.index(3)).collect();
    let pred: Vec<usize> = (0..1000).map(|_| rng.index(3)).collect();
    let mut tally = [[0u64; 3]; 3];
    for (t, p) in truth.iter().zip(&pred) {
        tally[*t][*p] += 1;
    }
    assert_eq!(confusion_indices(&truth, &pred).unwrap().counts, tally);
}

#[test]
fn metric_examples() {
    let m = metrics(&cm([[5, 0, 0], [0, 5, 0], [0, 0, 5]])).unwrap();
    assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    // a model that never predicts UP
    let m = metrics(&cm([[0, 2, 3], [0, 4, 1], [0, 1, 9]])).unwrap();
    assert_eq!(m.precision[0], 0.0);
    assert_eq!(m.recall[0], 0.0);
    assert_eq!(m.f1[0], 0.0);
    assert!(matches!(metrics(&cm([[0; 3]; 3])), Err(EvalError::Empty)));
}

#[test]
fn cost_examples() {
    let costs = CostMatrix::default();
    assert_eq!(custom_cost(&cm([[3, 0, 0], [0, 2, 0], [0, 0, 7]]), &costs).unwrap(), 0.0);
    assert_eq!(custom_cost(&cm([[0, 1, 0], [0, 0, 0], [0, 0, 0]]), &costs).unwrap(), 3.0);
    // one correct, one NEUTRAL predicted as UP
    assert_eq!(custom_cost(&cm([[1, 0, 0], [0, 0, 0], [1, 0, 0]]), &costs).unwrap(), 0.5);
    let negative = CostMatrix {
        costs: [[0.0, -1.0, 1.0], [3.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
    };
    assert!(matches!(custom_cost(&cm([[1, 0, 0]; 3]), &negative), Err(EvalError::Cost(_))));
    let diagonal = CostMatrix {
        costs: [[1.0, 3.0, 1.0], [3.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
    };
    assert!(diagonal.validate().is_err());
}

#[test]
fn random_matrices_match_definition_oracle() {
    let mut rng = RngStream::named(2, "matrices");
    let mut cost_rng = RngStream::named(2, "costs");
    for trial in 0..1000 {
        let mut counts = [[0u64; 3]; 3];
        // mostly sparse matrices so empty rows and columns occur
        for row in counts.iter_mut() {
            for c in row.iter_mut() {
                *c = if rng.bernoulli(0.3) { 0 } else { rng.index(50) as u64 };
            }
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            counts[trial % 3][(trial / 3) % 3] = 1;
        }
        let mut costs = CostMatrix::default();
        if trial % 2 == 1 {
            for i in 0..3 {
                for j in 0..3 {
                    costs.costs[i][j] = if i == j { 0.0 } else { cost_rng.uniform_range(0.0, 5.0) };
                }
            }
        }
        let m = metrics(&cm(counts)).unwrap();
        let o = oracle(&counts, &costs.costs);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        assert!(close(m.accuracy, o.accuracy));
        assert!(close(m.macro_f1, o.macro_f1), "{counts:?}");
        for k in 0..3 {
            assert!(close(m.precision[k], o.precision[k]));
            assert!(close(m.recall[k], o.recall[k]));
            assert!(close(m.f1[k], o.f1[k]));
        }
        assert!(close(custom_cost(&cm(counts), &costs).unwrap(), o.cost));
        assert_eq!(custom_cost(&cm(counts), &CostMatrix::unit()).unwrap(), 1.0 - m.accuracy);
    }
}

#[test]
fn report_recomputes_from_matrix() {
    let r = EvaluationReport::from_confusion(
        meta(ModelKind::Lstm, true),
        cm([[4, 2, 9], [1, 6, 8], [7, 3, 40]]),
        CostMatrix::default(),
    )
    .unwrap();
    assert_eq!(r.recompute().unwrap(), r);
    let json = r.to_json();
    let back: EvaluationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), json);
    assert_eq!(r.samples, 80);
    assert_eq!(r.confusion.to_csv().lines().count(), 4);
}

#[test]
fn table_has_one_row_per_report() {
    let a = EvaluationReport::from_confusion(meta(ModelKind::Attention, true), cm([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), CostMatrix::default()).unwrap();
    let b = EvaluationReport::from_confusion(meta(ModelKind::Attention, false), cm([[0, 1, 0], [0, 1, 0], [0, 0, 1]]), CostMatrix::default()).unwrap();
    let table = render_table(&[a, b]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("Model"));
    assert!(lines[0].contains("Macro-F1") && lines[0].contains("Custom Cost"));
    assert!(lines[2].contains("Attention") && lines[2].contains("Yes") && lines[2].contains("100.000"));
    assert!(lines[3].contains("No") && lines[3].contains("66.667"));
}

fn with_scores(sentiment: bool, macro_f1: f64, cost: f64) -> EvaluationReport {
    let mut r = EvaluationReport::from_confusion(meta(ModelKind::Attention, sentiment), cm([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), CostMatrix::default()).unwrap();
    r.macro_f1 = macro_f1;
    r.custom_cost = cost;
    r
}

#[test]
fn ablation_examples() {
    let same = with_scores(true, 0.5, 0.5);
    let mut other = same.clone();
    other.meta.sentiment = false;
    let rep = ablation_report(&same, &other).unwrap();
    assert!(rep.deltas.iter().all(|d| d.delta == 0.0 && d.movement == Movement::Unchanged));

    let rep = ablation_report(&with_scores(true, 0.390, 0.5), &with_scores(false, 0.359, 0.5)).unwrap();
    let d = rep.delta("macro_f1").unwrap();
    assert!((d.delta - 0.031).abs() < 1e-12);
    assert_eq!(d.movement, Movement::FavorsSentiment);

    let rep = ablation_report(&with_scores(true, 0.5, 0.651), &with_scores(false, 0.5, 0.914)).unwrap();
    let d = rep.delta("custom_cost").unwrap();
    assert!((d.delta + 0.263).abs() < 1e-12);
    assert_eq!(d.movement, Movement::FavorsSentiment);
}

#[test]
fn ablation_requires_comparable_reports() {
    let with = with_scores(true, 0.4, 0.5);
    let mut other_split = with_scores(false, 0.3, 0.6);
    other_split.meta.split_digest = "def".into();
    assert!(matches!(ablation_report(&with, &other_split), Err(EvalError::Comparability(_))));
    let mut other_model = with_scores(false, 0.3, 0.6);
    other_model.meta.model = ModelKind::Lstm;
    assert!(matches!(ablation_report(&with, &other_model), Err(EvalError::Comparability(_))));
    let mut other_seed = with_scores(false, 0.3, 0.6);
    other_seed.meta.seed += 1;
    assert!(matches!(ablation_report(&with, &other_seed), Err(EvalError::Comparability(_))));
    let mut other_tau = with_scores(false, 0.3, 0.6);
    other_tau.meta.tau = 0.05;
    assert!(matches!(ablation_report(&with, &other_tau), Err(EvalError::Comparability(_))));
    assert!(matches!(ablation_report(&with, &with), Err(EvalError::Comparability(_))));
}

fn direction() -> impl Strategy<Value = Direction> {
    (0usize..3).prop_map(|i| Direction::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn sample_order_does_not_matter(pairs in prop::collection::vec((direction(), direction()), 1..200), seed in any::<u64>()) {
        let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        RngStream::new(seed).shuffle(&mut shuffled);
        let (ts, ps): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let a = EvaluationReport::evaluate(meta(ModelKind::LogReg, true), &t, &p, CostMatrix::default()).unwrap();
        let b = EvaluationReport::evaluate(meta(ModelKind::LogReg, true), &ts, &ps, CostMatrix::default()).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn accuracy_is_trace_over_total(counts in prop::array::uniform3(prop::array::uniform3(0u64..100))) {
        let m = cm(counts);
        prop_assume!(m.total() > 0);
        let r = metrics(&m).unwrap();
        prop_assert_eq!(r.accuracy, m.trace() as f64 / m.total() as f64);
        prop_assert_eq!(custom_cost(&m, &CostMatrix::unit()).unwrap(), 1.0 - r.accuracy);
        prop_assert!(r.macro_f1 >= 0.0 && r.macro_f1 <= 1.0);
    }
}
