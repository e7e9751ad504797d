use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::transform::{fit_impute, fit_scaler, forward_fill, sma, ImputeStats, ScalerState};
use super::{FeatureError, FeatureMask, FeatureWindow, Sample, FULL_DIM, FUNDAMENTAL_DIM, WINDOW_LEN};
use crate::data::{Dataset, EarningsEvent, EventRef, FirmDataset, FirmId, Splits, METRIC_COUNT};
use crate::exec::{self, Execution};
use crate::labeling::{label_event, LabelError, LabeledEvent};
use crate::numerics::Tensor;
use crate::sentiment::{daily_sentiment, SentimentProvider, SentimentVector};

/// One firm's inputs on a dense calendar-day grid running from its first to
/// its last bar.
#[derive(Clone, Debug)]
pub struct FirmGrid {
    pub start: NaiveDate,
    pub close: Vec<f64>,
    pub sma_3: Vec<f64>,
    pub sma_6: Vec<f64>,
    /// As-of fundamentals record per day (index into the firm's records).
    pub fundamentals: Vec<Option<usize>>,
    pub sentiment: Vec<SentimentVector>,
}

impl FirmGrid {
    /// Days without news carry the neutral fill (0, 0, 1).
    pub fn build(firm: &FirmDataset, sentiment: &BTreeMap<NaiveDate, SentimentVector>) -> Result<Self, FeatureError> {
        let (Some(start), Some(end)) = (firm.first_date(), firm.last_date()) else {
            return Err(FeatureError::Shape(format!("{} has no price bars", firm.firm_id)));
        };
        let days: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= end).collect();
        let closes: Vec<f64> = firm.bars.iter().map(|b| b.adjusted_close).collect();
        let (s3, s6) = (sma(&closes, 3), sma(&closes, 6));
        let mut on_grid = [vec![None; days.len()], vec![None; days.len()], vec![None; days.len()]];
        for (k, b) in firm.bars.iter().enumerate() {
            let i = (b.date - start).num_days() as usize;
            on_grid[0][i] = Some(closes[k]);
            on_grid[1][i] = Some(s3[k]);
            on_grid[2][i] = Some(s6[k]);
        }
        let [close, sma_3, sma_6] = on_grid.map(|s| forward_fill(&s));
        let mut record = None;
        let mut next = 0;
        let fundamentals = days
            .iter()
            .map(|d| {
                while next < firm.fundamentals.len() && firm.fundamentals[next].effective_date <= *d {
                    record = Some(next);
                    next += 1;
                }
                record
            })
            .collect();
        Ok(Self {
            start,
            close: close?,
            sma_3: sma_3?,
            sma_6: sma_6?,
            fundamentals,
            sentiment: days.iter().map(|d| sentiment.get(d).copied().unwrap_or(SentimentVector::NEUTRAL)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    /// The `len` calendar days ending the day before `ea_date`, or `None`
    /// when the grid does not reach back that far.
    pub fn raw_window(&self, firm: &FirmDataset, ea_date: NaiveDate, len: usize) -> Option<RawWindow> {
        let first = ea_date.checked_sub_days(Days::new(len as u64))?;
        if first < self.start {
            return None;
        }
        let offset = (first - self.start).num_days() as usize;
        if offset + len > self.len() {
            return None;
        }
        let range = offset..offset + len;
        Some(RawWindow {
            first_day: first,
            fundamentals: range
                .clone()
                .map(|i| self.fundamentals[i].map_or([None; METRIC_COUNT], |r| firm.fundamentals[r].values))
                .collect(),
            dense: range
                .map(|i| {
                    let s = self.sentiment[i];
                    [self.close[i], self.sma_3[i], self.sma_6[i], s.p_positive, s.p_negative, s.p_neutral]
                })
                .collect(),
        })
    }
}

/// Window rows before imputation and scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWindow {
    pub first_day: NaiveDate,
    pub fundamentals: Vec<[Option<f64>; METRIC_COUNT]>,
    /// close, sma_3, sma_6, p_positive, p_negative, p_neutral
    pub dense: Vec<[f64; 6]>,
}

impl RawWindow {
    /// Full-width, imputed, unscaled matrix.
    pub fn assemble(&self, impute: &ImputeStats) -> Result<Tensor, FeatureError> {
        let mut data = Vec::with_capacity(self.dense.len() * FULL_DIM);
        for (f, d) in self.fundamentals.iter().zip(&self.dense) {
            data.extend(impute.apply_row(f));
            data.extend_from_slice(d);
        }
        Ok(Tensor::new(vec![self.dense.len(), FULL_DIM], data)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub window_len: usize,
    pub tau: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            tau: crate::labeling::DEFAULT_TAU,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub firm_id: FirmId,
    pub announcement_date: NaiveDate,
    pub split: String,
    /// `insufficient_history`, `unresolvable_event` or `no_prior_session`.
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    /// Windows built for train, val and test.
    pub built: [usize; 3],
    pub skipped: Vec<SkippedEvent>,
    pub scaler_warnings: Vec<String>,
}

/// Standardized full-width samples for the three splits, plus the statistics
/// fitted on the training split.
#[derive(Clone, Debug)]
pub struct PreparedSplits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub impute: ImputeStats,
    pub scaler: ScalerState,
    pub report: PrepareReport,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

type Built = (EventRef, Result<(LabeledEvent, RawWindow), &'static str>);

fn raw_for(firm: &FirmDataset, grid: &FirmGrid, event: &EarningsEvent, cfg: &PrepareConfig) -> Result<(LabeledEvent, RawWindow), &'static str> {
    let label = match label_event(firm, event, cfg.tau) {
        Ok(l) => l,
        Err(LabelError::Unresolvable { .. }) => return Err("unresolvable_event"),
        Err(LabelError::NoPriorSession { .. }) => return Err("no_prior_session"),
        Err(_) => return Err("invalid_prices"),
    };
    let raw = grid.raw_window(firm, label.ea_date, cfg.window_len).ok_or("insufficient_history")?;
    Ok((label, raw))
}

/// Scores news, builds calendar grids and windows for every split event,
/// fits imputation and scaling on the training windows only, and applies
/// them to all three splits.
pub fn prepare(
    dataset: &Dataset,
    splits: &Splits<EventRef>,
    provider: &dyn SentimentProvider,
    cfg: &PrepareConfig,
    exec: Execution,
) -> Result<PreparedSplits, FeatureError> {
    if cfg.window_len == 0 {
        return Err(FeatureError::Config("window_len must be positive".into()));
    }
    let firms: Vec<&FirmDataset> = dataset.iter().collect();
    let grids = exec::try_map(exec, &firms, |f| -> Result<(FirmId, FirmGrid), FeatureError> {
        let sentiment = daily_sentiment(&f.articles, provider, Execution::Sequential)?;
        Ok((f.firm_id.clone(), FirmGrid::build(f, &sentiment)?))
    })?;
    let grids: BTreeMap<FirmId, FirmGrid> = grids.into_iter().collect();

    let lists = [&splits.train, &splits.val, &splits.test];
    let mut built: Vec<Vec<Built>> = Vec::new();
    for list in lists {
        let part = exec::try_map(exec, list, |e| -> Result<Built, FeatureError> {
            let firm = dataset
                .firm(&e.firm_id)
                .ok_or_else(|| FeatureError::Config(format!("split names unknown firm {}", e.firm_id)))?;
            Ok((e.clone(), raw_for(firm, &grids[&e.firm_id], &e.event, cfg)))
        })?;
        built.push(part);
    }

    let mut report = PrepareReport::default();
    let mut kept: Vec<Vec<(EventRef, LabeledEvent, RawWindow)>> = Vec::new();
    for (s, part) in built.into_iter().enumerate() {
        let mut ok = Vec::new();
        for (e, r) in part {
            match r {
                Ok((l, w)) => ok.push((e, l, w)),
                Err(reason) => report.skipped.push(SkippedEvent {
                    firm_id: e.firm_id.clone(),
                    announcement_date: e.event.announcement_date,
                    split: SPLIT_NAMES[s].to_string(),
                    reason: reason.to_string(),
                }),
            }
        }
        report.built[s] = ok.len();
        kept.push(ok);
    }
    if kept[0].is_empty() {
        return Err(FeatureError::Config("no training window could be built".into()));
    }

    let impute = fit_impute(
        kept[0].iter().flat_map(|(_, _, w)| w.fundamentals.iter().map(|r| r.as_slice())),
        FUNDAMENTAL_DIM,
    )?;
    let unscaled: Vec<Vec<Tensor>> = kept
        .iter()
        .map(|part| part.iter().map(|(_, _, w)| w.assemble(&impute)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let (scaler, warnings) = fit_scaler(unscaled[0].iter())?;
    report.scaler_warnings = warnings;

    let mut out: Vec<Vec<Sample>> = Vec::new();
    for (part, mats) in kept.into_iter().zip(unscaled) {
        let samples = part
            .into_iter()
            .zip(mats)
            .map(|((e, label, _), m)| {
                Ok(Sample {
                    window: FeatureWindow {
                        firm_id: e.firm_id,
                        event: e.event,
                        ea_date: label.ea_date,
                        mask: FeatureMask::WithSentiment,
                        matrix: scaler.apply(&m)?,
                    },
                    label,
                })
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        out.push(samples);
    }
    let test = out.pop().unwrap_or_default();
    let val = out.pop().unwrap_or_default();
    let train = out.pop().unwrap_or_default();
    Ok(PreparedSplits {
        train,
        val,
        test,
        impute,
        scaler,
        report,
    })
}

/// Builds one standardized window for `event` using fitted statistics.
/// `scaler` must be full width; the mask is applied after scaling.
pub fn build_window(
    firm: &FirmDataset,
    event: &EarningsEvent,
    sentiment: &BTreeMap<NaiveDate, SentimentVector>,
    impute: &ImputeStats,
    scaler: &ScalerState,
    mask: FeatureMask,
    cfg: &PrepareConfig,
) -> Result<FeatureWindow, FeatureError> {
    let grid = FirmGrid::build(firm, sentiment)?;
    let label = label_event(firm, event, cfg.tau)?;
    let raw = grid.raw_window(firm, label.ea_date, cfg.window_len).ok_or_else(|| {
        FeatureError::Config(format!(
            "insufficient_history: {} {} needs {} days before {}",
            firm.firm_id, event.announcement_date, cfg.window_len, label.ea_date
        ))
    })?;
    let full = scaler.apply(&raw.assemble(impute)?)?;
    Ok(FeatureWindow {
        firm_id: firm.firm_id.clone(),
        event: *event,
        ea_date: label.ea_date,
        mask,
        matrix: mask.apply(&full)?,
    })
}
