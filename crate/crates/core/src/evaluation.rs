//! Confusion matrices, classification metrics, the asymmetric cost and
//! ablation comparisons.
//!
//! Zero denominators yield 0: a class that is never predicted has precision
//! 0, a class that never occurs has recall 0, and F1 is 0 when precision and
//! recall are both 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::Direction;
use crate::models::ModelKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{0} true labels but {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("label index {0} is not a class")]
    BadLabel(usize),
    #[error("cannot compute metrics over zero samples")]
    Empty,
    #[error("invalid cost matrix: {0}")]
    Cost(String),
    #[error("reports are not comparable: {0}")]
    Comparability(String),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }

    /// Grid with a header row, for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred,UP,DOWN,NEUTRAL\n");
        for d in Direction::ALL {
            let r = self.counts[d.index()];
            let _ = writeln!(out, "{},{},{},{}", d.name(), r[0], r[1], r[2]);
        }
        out
    }
}

pub fn confusion(truth: &[Direction], predicted: &[Direction]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// [`confusion`] over raw class indices.
pub fn confusion_indices(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    let conv = |xs: &[usize]| -> Result<Vec<Direction>, EvalError> {
        xs.iter().map(|&i| Direction::from_index(i).ok_or(EvalError::BadLabel(i))).collect()
    };
    confusion(&conv(truth)?, &conv(predicted)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub costs: [[f64; 3]; 3],
}

impl Default for CostMatrix {
    /// 0 on the diagonal, 3 for UP↔DOWN, 1 for any confusion involving NEUTRAL.
    fn default() -> Self {
        Self {
            costs: [[0.0, 3.0, 1.0], [3.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
        }
    }
}

impl CostMatrix {
    /// 1 off the diagonal.
    pub fn unit() -> Self {
        Self {
            costs: [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for i in 0..3 {
            if self.costs[i][i] != 0.0 {
                return Err(EvalError::Cost(format!("diagonal entry ({i},{i}) must be 0")));
            }
            for j in 0..3 {
                let c = self.costs[i][j];
                if !(c.is_finite() && c >= 0.0) {
                    return Err(EvalError::Cost(format!("entry ({i},{j}) = {c} must be finite and non-negative")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision: [f64; 3] = std::array::from_fn(|k| ratio(cm.counts[k][k], cm.col_sum(k)));
    let recall: [f64; 3] = std::array::from_fn(|k| ratio(cm.counts[k][k], cm.row_sum(k)));
    let f1: [f64; 3] = std::array::from_fn(|k| {
        let (p, r) = (precision[k], recall[k]);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    });
    Ok(Metrics {
        accuracy: ratio(cm.trace(), total),
        precision,
        recall,
        f1,
        macro_f1: (f1[0] + f1[1] + f1[2]) / 3.0,
    })
}

/// Mean per-sample cost, `Σ n_ij·c_ij / N`.
///
/// Evaluated as `1 − Σ n_ij·(1 − c_ij) / N`: under unit costs the sum is the
/// trace, so the result is bit-identical to `1 − accuracy`.
pub fn custom_cost(cm: &ConfusionMatrix, costs: &CostMatrix) -> Result<f64, EvalError> {
    costs.validate()?;
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut credit = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            credit += cm.counts[i][j] as f64 * (1.0 - costs.costs[i][j]);
        }
    }
    Ok(1.0 - credit / total as f64)
}

/// Identifies what a report was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: ModelKind,
    pub sentiment: bool,
    pub seed: u64,
    pub tau: f64,
    /// `train`, `val` or `test`.
    pub split: String,
    /// Digest of the evaluated events, used to check comparability.
    pub split_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    pub confusion: ConfusionMatrix,
    pub cost_matrix: CostMatrix,
    pub samples: u64,
    pub accuracy: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
    pub macro_f1: f64,
    pub custom_cost: f64,
}

impl EvaluationReport {
    pub fn from_confusion(meta: ReportMeta, confusion: ConfusionMatrix, cost_matrix: CostMatrix) -> Result<Self, EvalError> {
        let m = metrics(&confusion)?;
        Ok(Self {
            meta,
            samples: confusion.total(),
            custom_cost: custom_cost(&confusion, &cost_matrix)?,
            confusion,
            cost_matrix,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            macro_f1: m.macro_f1,
        })
    }

    pub fn evaluate(meta: ReportMeta, truth: &[Direction], predicted: &[Direction], cost_matrix: CostMatrix) -> Result<Self, EvalError> {
        Self::from_confusion(meta, confusion(truth, predicted)?, cost_matrix)
    }

    /// Rebuilds every number from the stored matrices.
    pub fn recompute(&self) -> Result<Self, EvalError> {
        Self::from_confusion(self.meta.clone(), self.confusion, self.cost_matrix)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

const TABLE_HEADER: [&str; 7] = ["Model", "Sent.", "Acc. (%)", "Macro-F1", "Prec. (UP)", "Prec. (DOWN)", "Custom Cost"];

/// Aligned plain-text table, one row per report.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.meta.model.display_name().to_string(),
                if r.meta.sentiment { "Yes" } else { "No" }.to_string(),
                format!("{:.3}", 100.0 * r.accuracy),
                format!("{:.3}", r.macro_f1),
                format!("{:.3}", r.precision[Direction::Up.index()]),
                format!("{:.3}", r.precision[Direction::Down.index()]),
                format!("{:.3}", r.custom_cost),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..7)
        .map(|j| rows.iter().map(|r| r[j].len()).chain([TABLE_HEADER[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| if j < 2 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        out.push_str(padded.join(" | ").trim_end());
        out.push('\n');
    };
    line(&TABLE_HEADER, &mut out);
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in &rows {
        line(&r.iter().map(String::as_str).collect::<Vec<_>>(), &mut out);
    }
    out
}

/// Which way a metric moved when sentiment was added.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    FavorsSentiment,
    FavorsWithout,
    Unchanged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub with_sentiment: f64,
    pub without_sentiment: f64,
    /// with − without
    pub delta: f64,
    pub movement: Movement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub model: ModelKind,
    pub split: String,
    pub split_digest: String,
    pub deltas: Vec<MetricDelta>,
}

impl AblationReport {
    pub fn delta(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }
}

pub fn ablation_report(with: &EvaluationReport, without: &EvaluationReport) -> Result<AblationReport, EvalError> {
    if with.meta.model != without.meta.model {
        return Err(EvalError::Comparability(format!(
            "model kinds differ ({} vs {})",
            with.meta.model, without.meta.model
        )));
    }
    if with.meta.split_digest != without.meta.split_digest || with.meta.split != without.meta.split {
        return Err(EvalError::Comparability("reports were computed on different event sets".into()));
    }
    if with.meta.seed != without.meta.seed || with.meta.tau != without.meta.tau {
        return Err(EvalError::Comparability(format!(
            "runs differ in seed or tau ({}/{} vs {}/{})",
            with.meta.seed, with.meta.tau, without.meta.seed, without.meta.tau
        )));
    }
    if !with.meta.sentiment || without.meta.sentiment {
        return Err(EvalError::Comparability("expected one report with sentiment and one without".into()));
    }
    // (name, with, without, higher is better)
    let rows = [
        ("accuracy", with.accuracy, without.accuracy, true),
        ("macro_f1", with.macro_f1, without.macro_f1, true),
        ("precision_up", with.precision[0], without.precision[0], true),
        ("precision_down", with.precision[1], without.precision[1], true),
        ("precision_neutral", with.precision[2], without.precision[2], true),
        ("recall_up", with.recall[0], without.recall[0], true),
        ("recall_down", with.recall[1], without.recall[1], true),
        ("recall_neutral", with.recall[2], without.recall[2], true),
        ("custom_cost", with.custom_cost, without.custom_cost, false),
    ];
    let deltas = rows
        .into_iter()
        .map(|(name, w, wo, higher_better)| {
            let delta = w - wo;
            let movement = if delta == 0.0 {
                Movement::Unchanged
            } else if (delta > 0.0) == higher_better {
                Movement::FavorsSentiment
            } else {
                Movement::FavorsWithout
            };
            MetricDelta {
                metric: name.to_string(),
                with_sentiment: w,
                without_sentiment: wo,
                delta,
                movement,
            }
        })
        .collect();
    Ok(AblationReport {
        model: with.meta.model,
        split: with.meta.split.clone(),
        split_digest: with.meta.split_digest.clone(),
        deltas,
    })
}
