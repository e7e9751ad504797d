use serde::{Deserialize, Serialize};

use super::{FeatureError, FEATURE_NAMES, SCALER_FLOOR};
use crate::numerics::Tensor;

/// Replaces each gap with the most recent earlier value.
pub fn forward_fill(values: &[Option<f64>]) -> Result<Vec<f64>, FeatureError> {
    let mut last = None;
    values
        .iter()
        .enumerate()
        .map(|(index, v)| {
            if v.is_some() {
                last = *v;
            }
            last.ok_or(FeatureError::LeadingGap { index })
        })
        .collect()
}

/// Trailing simple moving average; the first `k - 1` entries average over
/// what is available.
pub fn sma(prices: &[f64], k: usize) -> Vec<f64> {
    assert!(k >= 1, "window must be positive");
    let mut out = Vec::with_capacity(prices.len());
    let mut sum = 0.0;
    for t in 0..prices.len() {
        sum += prices[t];
        if t >= k {
            sum -= prices[t - k];
        }
        // recompute periodically so rounding drift cannot build up
        if t % 256 == 255 {
            sum = prices[(t + 1).saturating_sub(k)..=t].iter().sum();
        }
        out.push(sum / (t + 1).min(k) as f64);
    }
    out
}

/// Per-column means used to fill missing fundamentals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub means: Vec<f64>,
}

/// Column means over the observed cells of `rows`.
pub fn fit_impute<'a, I>(rows: I, width: usize) -> Result<ImputeStats, FeatureError>
where
    I: IntoIterator<Item = &'a [Option<f64>]>,
{
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    for row in rows {
        if row.len() != width {
            return Err(FeatureError::Shape(format!("expected {width} columns, got {}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = v {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    let missing: Vec<String> = (0..width)
        .filter(|&j| counts[j] == 0)
        .map(|j| FEATURE_NAMES.get(j).map_or_else(|| format!("column {j}"), |s| s.to_string()))
        .collect();
    if !missing.is_empty() {
        return Err(FeatureError::AllMissing { metrics: missing });
    }
    Ok(ImputeStats {
        means: sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect(),
    })
}

impl ImputeStats {
    pub fn apply_row(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter().zip(&self.means).map(|(v, m)| v.unwrap_or(*m)).collect()
    }
}

pub fn mean_impute(rows: &[Vec<Option<f64>>], stats: &ImputeStats) -> Result<Vec<Vec<f64>>, FeatureError> {
    rows.iter()
        .map(|r| {
            if r.len() != stats.means.len() {
                return Err(FeatureError::Shape(format!("expected {} columns, got {}", stats.means.len(), r.len())));
            }
            Ok(stats.apply_row(r))
        })
        .collect()
}

/// Per-feature z-score parameters (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits on every row of the given matrices. Columns whose standard deviation
/// falls below the floor are clamped and reported.
pub fn fit_scaler<'a, I>(matrices: I) -> Result<(ScalerState, Vec<String>), FeatureError>
where
    I: IntoIterator<Item = &'a Tensor>,
{
    let matrices: Vec<&Tensor> = matrices.into_iter().collect();
    let Some(first) = matrices.first() else {
        return Err(FeatureError::TooFewRows(0));
    };
    let d = first.dims2().1;
    let mut n = 0usize;
    let mut sum = vec![0.0; d];
    for m in &matrices {
        if m.dims2().1 != d {
            return Err(FeatureError::Shape(format!("expected {d} columns, got {}", m.dims2().1)));
        }
        for row in m.data().chunks(d) {
            n += 1;
            for j in 0..d {
                sum[j] += row[j];
            }
        }
    }
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut sq = vec![0.0; d];
    for m in &matrices {
        for row in m.data().chunks(d) {
            for j in 0..d {
                let c = row[j] - mean[j];
                sq[j] += c * c;
            }
        }
    }
    let mut warnings = Vec::new();
    let std = sq
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let sd = (s / n as f64).sqrt();
            if sd < SCALER_FLOOR {
                let name = if d == FEATURE_NAMES.len() || d == 18 { FEATURE_NAMES[j].to_string() } else { format!("column {j}") };
                warnings.push(format!("feature {name} has standard deviation {sd:e} on the fit rows; clamped to {SCALER_FLOOR:e}"));
                SCALER_FLOOR
            } else {
                sd
            }
        })
        .collect();
    Ok((ScalerState { mean, std }, warnings))
}

impl ScalerState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &Tensor) -> Result<Tensor, FeatureError> {
        let (rows, d) = m.dims2();
        if d != self.dim() {
            return Err(FeatureError::Shape(format!("scaler fitted on {} columns, window has {d}", self.dim())));
        }
        let mut data = m.data().to_vec();
        for row in data.chunks_mut(d) {
            for j in 0..d {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
        Ok(Tensor::new(vec![rows, d], data)?)
    }

    /// The leading `d` columns of this scaler.
    pub fn prefix(&self, d: usize) -> ScalerState {
        ScalerState {
            mean: self.mean[..d].to_vec(),
            std: self.std[..d].to_vec(),
        }
    }
}
