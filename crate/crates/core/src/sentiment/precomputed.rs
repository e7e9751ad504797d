use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ProviderKind, SentimentError, SentimentProvider, SentimentVector};
use crate::data::{FirmId, NewsArticle};

/// One line of a precomputed score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedRecord {
    pub firm_id: FirmId,
    pub timestamp: DateTime<FixedOffset>,
    pub headline_digest: String,
    pub p_positive: f64,
    pub p_negative: f64,
    pub p_neutral: f64,
}

pub fn headline_digest(headline: &str) -> String {
    hex::encode(Sha256::digest(headline.as_bytes()))
}

/// Lookup key: firm, UTC instant, headline digest.
pub fn article_key(firm_id: &FirmId, timestamp: &DateTime<FixedOffset>, digest: &str) -> String {
    format!(
        "{}|{}|{}",
        firm_id,
        timestamp.to_utc().to_rfc3339_opts(SecondsFormat::AutoSi, true),
        digest
    )
}

/// Scores looked up from a JSON-lines file.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedProvider {
    scores: HashMap<String, SentimentVector>,
}

impl PrecomputedProvider {
    pub fn from_records(records: impl IntoIterator<Item = PrecomputedRecord>) -> Result<Self, SentimentError> {
        let mut scores = HashMap::new();
        for r in records {
            let v = SentimentVector::new(r.p_positive, r.p_negative, r.p_neutral)?;
            scores.insert(article_key(&r.firm_id, &r.timestamp, &r.headline_digest), v);
        }
        Ok(Self { scores })
    }

    pub fn load(path: &Path) -> Result<Self, SentimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| SentimentError::Cache {
            path: path.to_path_buf(),
            source,
        })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| SentimentError::ScoreFile {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let r: PrecomputedRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            SentimentVector::new(r.p_positive, r.p_negative, r.p_neutral).map_err(|e| bad(e.to_string()))?;
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl SentimentProvider for PrecomputedProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::PrecomputedFile
    }

    fn score(&self, article: &NewsArticle) -> Result<SentimentVector, SentimentError> {
        let key = article_key(&article.firm_id, &article.timestamp, &headline_digest(&article.headline));
        self.scores.get(&key).copied().ok_or(SentimentError::Lookup { key })
    }
}
