use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::types::{Dataset, EventRef, FirmId};
use super::DataError;

const FRACTION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || self.train <= 0.0 {
            return Err(DataError::Config(format!(
                "split fractions must be non-negative with a positive train share, got {parts:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(DataError::Config(format!("split fractions sum to {total}, expected 1")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Split sizes for `n` items: floor each share, then hand out the remainder
/// one at a time by largest fractional part, ties going to the later split.
pub fn split_counts(n: usize, fractions: &SplitFractions) -> Result<[usize; 3], DataError> {
    fractions.validate()?;
    let shares = fractions.as_array();
    let positive = shares.iter().filter(|&&f| f > 0.0).count();
    if n < positive {
        return Err(DataError::Sizing(format!(
            "{n} events cannot fill {positive} non-empty splits"
        )));
    }
    let exact: Vec<f64> = shares.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + FRACTION_TOLERANCE).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).filter(|&i| shares[i] > 0.0).collect();
    let frac = |i: usize| exact[i] - counts[i] as f64;
    order.sort_by(|&a, &b| {
        let (fa, fb) = (frac(a), frac(b));
        if (fa - fb).abs() <= FRACTION_TOLERANCE {
            b.cmp(&a)
        } else {
            fb.total_cmp(&fa)
        }
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    if let Some(i) = (0..3).find(|&i| shares[i] > 0.0 && counts[i] == 0) {
        let name = ["train", "validation", "test"][i];
        return Err(DataError::Sizing(format!("{n} events leave the {name} split empty")));
    }
    Ok(counts)
}

/// Three disjoint, chronologically ordered partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Orders items by `(date, firm)` and cuts them into train/val/test.
pub fn temporal_split<T: Clone>(
    items: &[T],
    key: impl Fn(&T) -> (NaiveDate, &FirmId),
    fractions: &SplitFractions,
) -> Result<Splits<T>, DataError> {
    let counts = split_counts(items.len(), fractions)?;
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort_by(|a, b| key(a).cmp(&key(b)));
    let mut it = sorted.into_iter().cloned();
    Ok(Splits {
        train: it.by_ref().take(counts[0]).collect(),
        val: it.by_ref().take(counts[1]).collect(),
        test: it.take(counts[2]).collect(),
    })
}

/// Temporal split of every announcement in the dataset.
pub fn split(dataset: &Dataset, fractions: &SplitFractions) -> Result<Splits<EventRef>, DataError> {
    let events: Vec<EventRef> = dataset
        .iter()
        .flat_map(|f| {
            f.events.iter().map(|e| EventRef {
                firm_id: f.firm_id.clone(),
                event: *e,
            })
        })
        .collect();
    temporal_split(&events, |e| (e.event.announcement_date, &e.firm_id), fractions)
}
