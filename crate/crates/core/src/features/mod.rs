//! Preprocessing (forward fill, mean imputation, z-scoring) and assembly of
//! the fixed-shape windows fed to the models.
//!
//! Column order is fixed: the 15 fundamentals in schema order, then
//! `adjusted_close`, `sma_3`, `sma_6`, then `p_positive`, `p_negative`,
//! `p_neutral`. Sentiment comes last so the ablated layout is a prefix of
//! the full one.

mod store;
mod transform;
mod window;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EarningsEvent, FirmId};
use crate::labeling::{LabelError, LabeledEvent};
use crate::numerics::{NumericsError, Tensor};
use crate::sentiment::SentimentError;

pub use store::{read_windows, write_windows, WindowStoreHeader, WINDOW_STORE_FORMAT, WINDOW_STORE_MAGIC};
pub use transform::{fit_impute, fit_scaler, forward_fill, mean_impute, sma, ImputeStats, ScalerState};
pub use window::{build_window, prepare, FirmGrid, PrepareConfig, PrepareReport, PreparedSplits, RawWindow, SkippedEvent, SPLIT_NAMES};

pub const WINDOW_LEN: usize = 30;
pub const SCALER_FLOOR: f64 = 1e-8;
pub const FULL_DIM: usize = 21;
pub const ABLATED_DIM: usize = 18;
pub const FUNDAMENTAL_DIM: usize = 15;

pub const FEATURE_NAMES: [&str; FULL_DIM] = [
    "net_margin",
    "roe",
    "roa",
    "debt_to_equity",
    "current_ratio",
    "operating_cash_flow",
    "gross_margin",
    "operating_margin",
    "asset_turnover",
    "interest_coverage",
    "revenue_growth",
    "eps",
    "book_value_per_share",
    "total_assets",
    "free_cash_flow",
    "adjusted_close",
    "sma_3",
    "sma_6",
    "p_positive",
    "p_negative",
    "p_neutral",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no observation before position {index} to fill from")]
    LeadingGap { index: usize },
    #[error("metrics missing in every training row: {}", metrics.join(", "))]
    AllMissing { metrics: Vec<String> },
    #[error("need at least 2 training rows to fit the scaler, got {0}")]
    TooFewRows(usize),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("window store {}: {message}", path.display())]
    Store { path: PathBuf, message: String },
}

/// Whether the sentiment block is part of the input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMask {
    #[default]
    WithSentiment,
    WithoutSentiment,
}

impl FeatureMask {
    pub fn dim(self) -> usize {
        match self {
            FeatureMask::WithSentiment => FULL_DIM,
            FeatureMask::WithoutSentiment => ABLATED_DIM,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        &FEATURE_NAMES[..self.dim()]
    }

    pub fn uses_sentiment(self) -> bool {
        self == FeatureMask::WithSentiment
    }

    /// Drops the masked columns of a full-width matrix.
    pub fn apply(self, full: &Tensor) -> Result<Tensor, FeatureError> {
        let (rows, cols) = full.dims2();
        if cols != FULL_DIM {
            return Err(FeatureError::Shape(format!("expected {FULL_DIM} columns, got {cols}")));
        }
        let d = self.dim();
        if d == FULL_DIM {
            return Ok(full.clone());
        }
        let data: Vec<f64> = full.data().chunks(FULL_DIM).flat_map(|r| r[..d].iter().copied()).collect();
        Ok(Tensor::new(vec![rows, d], data)?)
    }
}

/// One T×d model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub firm_id: FirmId,
    pub event: EarningsEvent,
    /// Resolved announcement price day; the last row is the day before.
    pub ea_date: chrono::NaiveDate,
    pub mask: FeatureMask,
    pub matrix: Tensor,
}

impl FeatureWindow {
    pub fn feature_names(&self) -> &'static [&'static str] {
        self.mask.names()
    }

    pub fn masked(&self, mask: FeatureMask) -> Result<FeatureWindow, FeatureError> {
        if mask == self.mask {
            return Ok(self.clone());
        }
        if self.mask != FeatureMask::WithSentiment {
            return Err(FeatureError::Shape("cannot restore removed sentiment columns".into()));
        }
        Ok(FeatureWindow {
            matrix: mask.apply(&self.matrix)?,
            mask,
            ..self.clone()
        })
    }
}

/// A full-width window with its target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub window: FeatureWindow,
    pub label: LabeledEvent,
}
