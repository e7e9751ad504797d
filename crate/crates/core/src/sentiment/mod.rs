//! Article scoring and the daily sentiment block.

mod daily;
mod lexicon;
mod precomputed;
mod remote;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NewsArticle;

pub use daily::{aggregate_daily, assign_day, daily_sentiment, MARKET_CLOSE_HOUR};
pub use lexicon::{LexiconProvider, NEGATIVE_WORDS, NEUTRAL_WORDS, POSITIVE_WORDS};
pub use precomputed::{article_key, headline_digest, PrecomputedProvider, PrecomputedRecord};
pub use remote::{RemoteConfig, RemoteProvider, RemoteRequest, RemoteResponse};

/// Tolerance on the sum of a sentiment distribution.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("invalid sentiment vector ({0}, {1}, {2})")]
    NotOnSimplex(f64, f64, f64),
    #[error("no precomputed score for article {key}")]
    Lookup { key: String },
    #[error("transport error after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("score file {path}: line {line}: {message}")]
    ScoreFile { path: PathBuf, line: usize, message: String },
    #[error("score cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no scored articles for this day")]
    Empty,
    #[error("{0}")]
    Config(String),
}

/// A distribution over (positive, negative, neutral).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentVector {
    pub p_positive: f64,
    pub p_negative: f64,
    pub p_neutral: f64,
}

impl SentimentVector {
    /// Fill value for days without news.
    pub const NEUTRAL: SentimentVector = SentimentVector {
        p_positive: 0.0,
        p_negative: 0.0,
        p_neutral: 1.0,
    };

    pub fn new(p_positive: f64, p_negative: f64, p_neutral: f64) -> Result<Self, SentimentError> {
        let v = Self {
            p_positive,
            p_negative,
            p_neutral,
        };
        let in_range = v.to_array().iter().all(|p| (0.0..=1.0).contains(p));
        if !in_range || (p_positive + p_negative + p_neutral - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(SentimentError::NotOnSimplex(p_positive, p_negative, p_neutral));
        }
        Ok(v)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p_positive, self.p_negative, self.p_neutral]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self, SentimentError> {
        Self::new(a[0], a[1], a[2])
    }
}

/// Which part of an article is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputText {
    Headline,
    Body,
    #[default]
    HeadlineAndBody,
}

impl InputText {
    pub fn text(self, article: &NewsArticle) -> String {
        match self {
            InputText::Headline => article.headline.clone(),
            InputText::Body => article.body.clone(),
            InputText::HeadlineAndBody => {
                if article.headline.is_empty() {
                    article.body.clone()
                } else if article.body.is_empty() {
                    article.headline.clone()
                } else {
                    format!("{}\n{}", article.headline, article.body)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    PrecomputedFile,
    Lexicon,
    RemoteService,
}

/// Scores one article. Implementations must be pure in the article content.
pub trait SentimentProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn score(&self, article: &NewsArticle) -> Result<SentimentVector, SentimentError>;
}

/// Serializable provider selection, as found in run configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Lexicon {
        #[serde(default)]
        input: InputText,
    },
    PrecomputedFile {
        path: PathBuf,
    },
    RemoteService(RemoteConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Lexicon {
            input: InputText::default(),
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn SentimentProvider>, SentimentError> {
        Ok(match self {
            ProviderConfig::Lexicon { input } => Box::new(LexiconProvider::new(*input)),
            ProviderConfig::PrecomputedFile { path } => Box::new(PrecomputedProvider::load(path)?),
            ProviderConfig::RemoteService(cfg) => Box::new(RemoteProvider::new(cfg.clone())?),
        })
    }
}
