//! Announcement-day price resolution and the three-class target.
//!
//! `R = (P_EA - P_prev) / P_prev`; `R >= τ` is UP, `R <= -τ` is DOWN and
//! everything in between is NEUTRAL. Both boundaries are inclusive.

use std::fmt;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EarningsEvent, FirmDataset, FirmId, PriceBar};

pub const DEFAULT_TAU: f64 = 0.03;
/// An announcement must have a session within this many calendar days.
pub const RESOLUTION_WINDOW_DAYS: i64 = 7;
pub const LABELS_SCHEMA: &str = "eapred-labels/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Up = 0,
    Down = 1,
    Neutral = 2,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Up, Direction::Down, Direction::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
            Direction::Neutral => "NEUTRAL",
        }
    }

    /// Rank in the order DOWN < NEUTRAL < UP.
    pub fn rank(self) -> i8 {
        match self {
            Direction::Down => -1,
            Direction::Neutral => 0,
            Direction::Up => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("{firm}: announcement on {date} has no session within {RESOLUTION_WINDOW_DAYS} days")]
    Unresolvable { firm: FirmId, date: NaiveDate },
    #[error("{firm}: no session before the announcement price day {date}")]
    NoPriorSession { firm: FirmId, date: NaiveDate },
    #[error("cannot summarise an empty set of labels")]
    Empty,
    #[error("labels file: {0}")]
    Format(String),
}

/// Classifies a return against threshold `tau`.
pub fn classify(r: f64, tau: f64) -> Direction {
    if r >= tau {
        Direction::Up
    } else if r <= -tau {
        Direction::Down
    } else {
        Direction::Neutral
    }
}

/// Return and class for a price pair.
pub fn label(p_prev: f64, p_ea: f64, tau: f64) -> Result<(f64, Direction), LabelError> {
    if !(p_prev > 0.0) {
        return Err(LabelError::NonPositivePrice(p_prev));
    }
    let r = (p_ea - p_prev) / p_prev;
    Ok((r, classify(r, tau)))
}

/// Resolved price days for one announcement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceDays {
    pub prev: NaiveDate,
    pub ea: NaiveDate,
    pub prev_index: usize,
    pub ea_index: usize,
}

/// Finds the announcement price day and the session before it.
///
/// After-close announcements price on the next session. Announcements during
/// market hours price on their own date, or on the next session when that
/// date has no bar (weekend or holiday).
pub fn resolve_ea_price_day(firm: &FirmId, event: &EarningsEvent, bars: &[PriceBar]) -> Result<PriceDays, LabelError> {
    let date = event.announcement_date;
    let first_candidate = if event.after_market_close {
        bars.partition_point(|b| b.date <= date)
    } else {
        bars.partition_point(|b| b.date < date)
    };
    let unresolvable = || LabelError::Unresolvable {
        firm: firm.clone(),
        date,
    };
    let ea_index = first_candidate;
    let ea_bar = bars.get(ea_index).ok_or_else(unresolvable)?;
    if (ea_bar.date - date).num_days() > RESOLUTION_WINDOW_DAYS {
        return Err(unresolvable());
    }
    if ea_index == 0 {
        return Err(LabelError::NoPriorSession {
            firm: firm.clone(),
            date: ea_bar.date,
        });
    }
    Ok(PriceDays {
        prev: bars[ea_index - 1].date,
        ea: ea_bar.date,
        prev_index: ea_index - 1,
        ea_index,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub firm_id: FirmId,
    pub event: EarningsEvent,
    pub prev_date: NaiveDate,
    pub ea_date: NaiveDate,
    pub p_prev: f64,
    pub p_ea: f64,
    pub r: f64,
    pub label: Direction,
    pub tau: f64,
}

/// Resolves and labels one announcement.
pub fn label_event(firm: &FirmDataset, event: &EarningsEvent, tau: f64) -> Result<LabeledEvent, LabelError> {
    let days = resolve_ea_price_day(&firm.firm_id, event, &firm.bars)?;
    let p_prev = firm.bars[days.prev_index].adjusted_close;
    let p_ea = firm.bars[days.ea_index].adjusted_close;
    let (r, label) = label(p_prev, p_ea, tau)?;
    Ok(LabeledEvent {
        firm_id: firm.firm_id.clone(),
        event: *event,
        prev_date: days.prev,
        ea_date: days.ea,
        p_prev,
        p_ea,
        r,
        label,
        tau,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: [usize; 3],
    pub fractions: [f64; 3],
}

impl ClassDistribution {
    pub fn from_counts(counts: [usize; 3]) -> Result<Self, LabelError> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(LabelError::Empty);
        }
        let fractions = counts.map(|c| c as f64 / total as f64);
        Ok(Self { counts, fractions })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn distribution<I: IntoIterator<Item = Direction>>(labels: I) -> Result<ClassDistribution, LabelError> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    ClassDistribution::from_counts(counts)
}

/// Renders the labels file: a metadata comment line, a header, then one row
/// per event.
pub fn render_labels(events: &[LabeledEvent], tau: f64) -> String {
    let mut out = format!("#schema={LABELS_SCHEMA} tau={tau}\n");
    out.push_str("firm_id,announcement_date,p_prev,p_ea,r,label,tau\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.firm_id,
            e.event.announcement_date,
            e.p_prev,
            e.p_ea,
            e.r,
            e.label.index(),
            e.tau
        );
    }
    out
}

/// One parsed row of a labels file.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub firm_id: FirmId,
    pub announcement_date: NaiveDate,
    pub p_prev: f64,
    pub p_ea: f64,
    pub r: f64,
    pub label: Direction,
    pub tau: f64,
}

/// Parses a labels file, returning the threshold from its metadata line.
pub fn parse_labels(text: &str) -> Result<(f64, Vec<LabelRow>), LabelError> {
    let mut lines = text.lines();
    let meta = lines.next().ok_or_else(|| LabelError::Format("empty file".into()))?;
    let rest = meta
        .strip_prefix(&format!("#schema={LABELS_SCHEMA} tau="))
        .ok_or_else(|| LabelError::Format(format!("unexpected metadata line {meta:?}")))?;
    let tau: f64 = rest.trim().parse().map_err(|_| LabelError::Format(format!("bad tau {rest:?}")))?;
    let header = lines.next().unwrap_or_default();
    if header != "firm_id,announcement_date,p_prev,p_ea,r,label,tau" {
        return Err(LabelError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || LabelError::Format(format!("line {}: {line:?}", i + 3));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(LabelRow {
            firm_id: FirmId::new(f[0]),
            announcement_date: NaiveDate::parse_from_str(f[1], "%Y-%m-%d").map_err(|_| bad())?,
            p_prev: num(f[2])?,
            p_ea: num(f[3])?,
            r: num(f[4])?,
            label: f[5].parse::<usize>().ok().and_then(Direction::from_index).ok_or_else(bad)?,
            tau: num(f[6])?,
        });
    }
    Ok((tau, rows))
}
