use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ureq::Agent;

use super::{ProviderKind, SentimentError, SentimentProvider, SentimentVector};
use crate::data::NewsArticle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Responses are cached here by content digest when set.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_timeout_ms() -> u64 {
    10_000
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub headline: String,
    pub body: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub p_positive: f64,
    pub p_negative: f64,
    pub p_neutral: f64,
}

/// Client for a scoring service that answers `POST {headline, body}` with a
/// JSON [`RemoteResponse`].
pub struct RemoteProvider {
    config: RemoteConfig,
    agent: Agent,
    cache_lock: Mutex<()>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, SentimentError> {
        if config.attempts == 0 {
            return Err(SentimentError::Config("remote provider needs at least one attempt".into()));
        }
        if let Some(dir) = &config.cache_dir {
            std::fs::create_dir_all(dir).map_err(|source| SentimentError::Cache {
                path: dir.clone(),
                source,
            })?;
        }
        let agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            cache_lock: Mutex::new(()),
        })
    }

    fn request_digest(req: &RemoteRequest) -> String {
        let mut h = Sha256::new();
        h.update(req.headline.as_bytes());
        h.update([0u8]);
        h.update(req.body.as_bytes());
        hex::encode(h.finalize())
    }

    fn cache_path(&self, digest: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{digest}.json")))
    }

    fn read_cache(path: &Path) -> Option<SentimentVector> {
        let text = std::fs::read_to_string(path).ok()?;
        let r: RemoteResponse = serde_json::from_str(&text).ok()?;
        SentimentVector::new(r.p_positive, r.p_negative, r.p_neutral).ok()
    }

    fn write_cache(&self, path: &Path, v: SentimentVector) -> Result<(), SentimentError> {
        let _guard = self.cache_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(&v).expect("sentiment vectors serialize");
        let err = |source| SentimentError::Cache {
            path: path.to_path_buf(),
            source,
        };
        std::fs::write(&tmp, body).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }

    fn attempt(&self, req: &RemoteRequest) -> Result<SentimentVector, (Option<u16>, String)> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(req)
            .map_err(|e| (None, e.to_string()))?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            return Err((Some(status), format!("HTTP {status}")));
        }
        let r: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (Some(status), format!("malformed body: {e}")))?;
        SentimentVector::new(r.p_positive, r.p_negative, r.p_neutral).map_err(|e| (Some(status), e.to_string()))
    }

    pub fn score_request(&self, req: &RemoteRequest) -> Result<SentimentVector, SentimentError> {
        let digest = Self::request_digest(req);
        let cache = self.cache_path(&digest);
        if let Some(v) = cache.as_deref().and_then(Self::read_cache) {
            return Ok(v);
        }
        let mut last = (None, String::new());
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.attempt(req) {
                Ok(v) => {
                    if let Some(path) = &cache {
                        self.write_cache(path, v)?;
                    }
                    return Ok(v);
                }
                Err(e) => last = e,
            }
        }
        Err(SentimentError::Transport {
            attempts: self.config.attempts,
            status: last.0,
            message: last.1,
        })
    }
}

impl SentimentProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteService
    }

    fn score(&self, article: &NewsArticle) -> Result<SentimentVector, SentimentError> {
        self.score_request(&RemoteRequest {
            headline: article.headline.clone(),
            body: article.body.clone(),
        })
    }
}
