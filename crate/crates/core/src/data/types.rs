use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

/// Ticker symbol identifying a firm.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(pub String);

impl FirmId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub adjusted_close: f64,
}

/// The fixed fundamental-metric schema, in feature order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NetMargin,
    Roe,
    Roa,
    DebtToEquity,
    CurrentRatio,
    OperatingCashFlow,
    GrossMargin,
    OperatingMargin,
    AssetTurnover,
    InterestCoverage,
    RevenueGrowth,
    Eps,
    BookValuePerShare,
    TotalAssets,
    FreeCashFlow,
}

pub const METRIC_COUNT: usize = 15;

impl Metric {
    pub const ALL: [Metric; METRIC_COUNT] = [
        Metric::NetMargin,
        Metric::Roe,
        Metric::Roa,
        Metric::DebtToEquity,
        Metric::CurrentRatio,
        Metric::OperatingCashFlow,
        Metric::GrossMargin,
        Metric::OperatingMargin,
        Metric::AssetTurnover,
        Metric::InterestCoverage,
        Metric::RevenueGrowth,
        Metric::Eps,
        Metric::BookValuePerShare,
        Metric::TotalAssets,
        Metric::FreeCashFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NetMargin => "net_margin",
            Metric::Roe => "roe",
            Metric::Roa => "roa",
            Metric::DebtToEquity => "debt_to_equity",
            Metric::CurrentRatio => "current_ratio",
            Metric::OperatingCashFlow => "operating_cash_flow",
            Metric::GrossMargin => "gross_margin",
            Metric::OperatingMargin => "operating_margin",
            Metric::AssetTurnover => "asset_turnover",
            Metric::InterestCoverage => "interest_coverage",
            Metric::RevenueGrowth => "revenue_growth",
            Metric::Eps => "eps",
            Metric::BookValuePerShare => "book_value_per_share",
            Metric::TotalAssets => "total_assets",
            Metric::FreeCashFlow => "free_cash_flow",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.name() == name)
    }
}

/// Fundamentals effective from `effective_date` until the next record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalRecord {
    pub effective_date: NaiveDate,
    /// Indexed by [`Metric::index`]; `None` marks a missing value.
    pub values: [Option<f64>; METRIC_COUNT],
}

impl FundamentalRecord {
    pub fn empty(effective_date: NaiveDate) -> Self {
        Self {
            effective_date,
            values: [None; METRIC_COUNT],
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values[metric.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub firm_id: FirmId,
    pub timestamp: DateTime<FixedOffset>,
    pub headline: String,
    pub body: String,
}

impl NewsArticle {
    /// Identity used for de-duplication and ordering: instant, then headline.
    pub fn dedup_key(&self) -> (i64, u32, &str) {
        let utc = self.timestamp.to_utc();
        (utc.timestamp(), utc.timestamp_subsec_nanos(), self.headline.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EarningsEvent {
    pub announcement_date: NaiveDate,
    pub after_market_close: bool,
}

/// Everything known about one firm after merging the input sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirmDataset {
    pub firm_id: FirmId,
    /// Strictly increasing by date.
    pub bars: Vec<PriceBar>,
    /// Increasing by effective date.
    pub fundamentals: Vec<FundamentalRecord>,
    /// Unique by (instant, headline) and chronologically sorted.
    pub articles: Vec<NewsArticle>,
    /// Increasing by announcement date, at most one per date.
    pub events: Vec<EarningsEvent>,
}

impl FirmDataset {
    pub fn new(firm_id: FirmId) -> Self {
        Self {
            firm_id,
            bars: Vec::new(),
            fundamentals: Vec::new(),
            articles: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Firms without announcements are kept but contribute no samples.
    pub fn is_flagged(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }
}

/// Firm-indexed collection, ordered by ticker.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub firms: BTreeMap<FirmId, FirmDataset>,
}

impl Dataset {
    pub fn firm(&self, id: &FirmId) -> Option<&FirmDataset> {
        self.firms.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FirmDataset> {
        self.firms.values()
    }

    pub fn event_count(&self) -> usize {
        self.firms.values().map(|f| f.events.len()).sum()
    }

    pub fn flagged_firms(&self) -> Vec<&FirmId> {
        self.firms.values().filter(|f| f.is_flagged()).map(|f| &f.firm_id).collect()
    }
}

/// An announcement together with the firm it belongs to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRef {
    pub firm_id: FirmId,
    pub event: EarningsEvent,
}
