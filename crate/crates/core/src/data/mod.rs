//! Firm-level dataset: domain types, file ingestion, synthetic generation and
//! temporal splitting.

pub mod calendar;
mod io;
mod split;
mod synthetic;
mod types;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{
    digest_files, ingest, manifest_for, normalize_firm, read_store, render_store, write_store, DatasetManifest,
    IngestConfig, IngestReport, RowCounts, EVENTS_FILE, FUNDAMENTALS_FILE, MANIFEST_FILE, NEWS_FILE, PRICES_FILE,
    SCHEMA_VERSION,
};
pub use split::{split, split_counts, temporal_split, SplitFractions, Splits};
pub use synthetic::{generate_synthetic, SyntheticSpec, NEGATIVE_WORDS, NEUTRAL_WORDS, POSITIVE_WORDS};
pub use types::{
    Dataset, EarningsEvent, EventRef, FirmDataset, FirmId, FundamentalRecord, Metric, NewsArticle, PriceBar,
    METRIC_COUNT,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: column {column}: {message}", file.display())]
    Malformed {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{}: schema {found:?} does not match expected {expected:?}", file.display())]
    Schema {
        file: PathBuf,
        found: String,
        expected: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sizing error: {0}")]
    Sizing(String),
}
