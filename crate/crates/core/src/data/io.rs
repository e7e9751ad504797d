//! Delimited-text and line-delimited JSON ingestion, plus the store writer.
//!
//! Every input file starts with a schema line: `#schema=eapred-data/1` for the
//! CSV files and `{"schema":"eapred-data/1"}` for `news.jsonl`. A zero-byte
//! file is read as empty.
//!
//! | file | columns |
//! |------|---------|
//! | `prices.csv` | `firm_id,date,adjusted_close` |
//! | `fundamentals.csv` | `firm_id,effective_date,metric,value` (empty value = missing) |
//! | `news.jsonl` | `{"firm_id","timestamp","headline","body"}` per line, RFC 3339 timestamps |
//! | `events.csv` | `firm_id,announcement_date,after_market_close` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{Dataset, EarningsEvent, FirmDataset, FirmId, FundamentalRecord, Metric, NewsArticle, PriceBar};
use super::DataError;
use crate::exec::{self, Execution};

pub const SCHEMA_VERSION: &str = "eapred-data/1";
pub const PRICES_FILE: &str = "prices.csv";
pub const FUNDAMENTALS_FILE: &str = "fundamentals.csv";
pub const NEWS_FILE: &str = "news.jsonl";
pub const EVENTS_FILE: &str = "events.csv";
pub const MANIFEST_FILE: &str = "dataset_manifest.json";

/// Locations of the four input files and the schema version they must carry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub prices: PathBuf,
    pub fundamentals: PathBuf,
    pub news: PathBuf,
    pub events: PathBuf,
    #[serde(default = "default_schema")]
    pub schema_version: String,
}

fn default_schema() -> String {
    SCHEMA_VERSION.to_string()
}

impl IngestConfig {
    /// The standard file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            prices: dir.join(PRICES_FILE),
            fundamentals: dir.join(FUNDAMENTALS_FILE),
            news: dir.join(NEWS_FILE),
            events: dir.join(EVENTS_FILE),
            schema_version: default_schema(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub firms: usize,
    pub bars: usize,
    pub fundamental_rows: usize,
    pub articles_read: usize,
    pub articles_stored: usize,
    pub duplicate_articles: usize,
    pub events: usize,
    /// Firms retained without any announcement.
    pub flagged_firms: Vec<FirmId>,
    /// Fundamental or news rows naming a firm that has no price series.
    pub orphan_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub prices: usize,
    pub fundamentals: usize,
    pub news: usize,
    pub events: usize,
}

/// Written next to a dataset store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub row_counts: RowCounts,
    /// SHA-256 over the four data files, in the order prices, fundamentals, news, events.
    pub digest: String,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, line: u64, column: &str, message: impl Into<String>) -> DataError {
    DataError::Malformed {
        file: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Splits off and checks the schema line. Returns the body and the number of
/// lines consumed.
fn strip_schema<'a>(path: &Path, text: &'a str, expected: &str, json: bool) -> Result<(&'a str, u64), DataError> {
    if text.trim().is_empty() {
        return Ok(("", 0));
    }
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    let found = if json {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
        }
        serde_json::from_str::<Header>(first).ok().map(|h| h.schema)
    } else {
        first.strip_prefix("#schema=").map(str::to_string)
    };
    match found {
        Some(v) if v == expected => Ok((rest, 1)),
        Some(v) => Err(DataError::Schema {
            file: path.to_path_buf(),
            found: v,
            expected: expected.to_string(),
        }),
        None => Err(DataError::Schema {
            file: path.to_path_buf(),
            found: first.chars().take(40).collect(),
            expected: expected.to_string(),
        }),
    }
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Parsed CSV rows with their 1-based physical line numbers.
fn csv_rows(path: &Path, text: &str, schema: &str, columns: &[&str]) -> Result<Vec<(u64, Vec<String>)>, DataError> {
    let (body, offset) = strip_schema(path, text, schema, false)?;
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| malformed(path, offset + 1, "header", e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found != columns {
        return Err(malformed(
            path,
            offset + 1,
            "header",
            format!("expected columns {columns:?}, found {found:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line()) + offset;
            malformed(path, line, "row", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line()) + offset;
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn parse_date(path: &Path, line: u64, column: &str, s: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| malformed(path, line, column, format!("bad date {s:?}: {e}")))
}

fn parse_f64(path: &Path, line: u64, column: &str, s: &str) -> Result<f64, DataError> {
    let v: f64 = s
        .parse()
        .map_err(|_| malformed(path, line, column, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(malformed(path, line, column, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_bool(path: &Path, line: u64, column: &str, s: &str) -> Result<bool, DataError> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(malformed(path, line, column, format!("not a boolean: {s:?}"))),
    }
}

#[derive(Deserialize)]
struct ArticleRow {
    firm_id: String,
    timestamp: DateTime<FixedOffset>,
    headline: String,
    body: String,
}

fn read_prices(path: &Path, schema: &str) -> Result<BTreeMap<FirmId, Vec<(u64, PriceBar)>>, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, schema, &["firm_id", "date", "adjusted_close"])?;
    let mut out: BTreeMap<FirmId, Vec<(u64, PriceBar)>> = BTreeMap::new();
    for (line, r) in rows {
        let date = parse_date(path, line, "date", &r[1])?;
        let close = parse_f64(path, line, "adjusted_close", &r[2])?;
        if close <= 0.0 {
            return Err(malformed(path, line, "adjusted_close", format!("price must be positive, got {close}")));
        }
        out.entry(FirmId::new(&r[0])).or_default().push((
            line,
            PriceBar {
                date,
                adjusted_close: close,
            },
        ));
    }
    Ok(out)
}

type FundamentalRows = BTreeMap<FirmId, BTreeMap<NaiveDate, FundamentalRecord>>;

fn read_fundamentals(path: &Path, schema: &str) -> Result<(FundamentalRows, usize), DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, schema, &["firm_id", "effective_date", "metric", "value"])?;
    let count = rows.len();
    let mut out: FundamentalRows = BTreeMap::new();
    for (line, r) in rows {
        let date = parse_date(path, line, "effective_date", &r[1])?;
        let metric = Metric::from_name(&r[2]).ok_or_else(|| malformed(path, line, "metric", format!("unknown metric {:?}", r[2])))?;
        let value = if r[3].is_empty() {
            None
        } else {
            Some(parse_f64(path, line, "value", &r[3])?)
        };
        let rec = out
            .entry(FirmId::new(&r[0]))
            .or_default()
            .entry(date)
            .or_insert_with(|| FundamentalRecord::empty(date));
        // a second row for the same cell is a conflict even when one is empty
        if rec.values[metric.index()].is_some() && value.is_some() {
            return Err(DataError::Validation(format!(
                "{}:{line}: duplicate fundamental {} for {} on {date}",
                path.display(),
                metric.name(),
                r[0]
            )));
        }
        if value.is_some() {
            rec.values[metric.index()] = value;
        }
    }
    Ok((out, count))
}

fn read_news(path: &Path, schema: &str) -> Result<Vec<NewsArticle>, DataError> {
    let text = read_text(path)?;
    let (body, offset) = strip_schema(path, &text, schema, true)?;
    let mut out = Vec::new();
    for (i, raw) in body.lines().enumerate() {
        let line = offset + i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: ArticleRow = serde_json::from_str(raw).map_err(|e| {
            malformed(path, line, &format!("char {}", e.column()), e.to_string())
        })?;
        out.push(NewsArticle {
            firm_id: FirmId(row.firm_id),
            timestamp: row.timestamp,
            headline: row.headline,
            body: row.body,
        });
    }
    Ok(out)
}

fn read_events(path: &Path, schema: &str) -> Result<Vec<(u64, FirmId, EarningsEvent)>, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, schema, &["firm_id", "announcement_date", "after_market_close"])?;
    rows.into_iter()
        .map(|(line, r)| {
            Ok((
                line,
                FirmId::new(&r[0]),
                EarningsEvent {
                    announcement_date: parse_date(path, line, "announcement_date", &r[1])?,
                    after_market_close: parse_bool(path, line, "after_market_close", &r[2])?,
                },
            ))
        })
        .collect()
}

/// Sorts, de-duplicates and validates one firm's merged records.
pub fn normalize_firm(mut firm: FirmDataset) -> Result<(FirmDataset, usize), DataError> {
    firm.bars.sort_by_key(|b| b.date);
    if let Some(w) = firm.bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(DataError::Validation(format!(
            "duplicate price bar for {} on {}",
            firm.firm_id, w[0].date
        )));
    }
    firm.fundamentals.sort_by_key(|f| f.effective_date);
    firm.articles.sort_by(|a, b| a.dedup_key().cmp(&b.dedup_key()));
    let before = firm.articles.len();
    firm.articles.dedup_by(|a, b| a.dedup_key() == b.dedup_key());
    let duplicates = before - firm.articles.len();

    firm.events.sort();
    if let Some(w) = firm.events.windows(2).find(|w| w[0].announcement_date == w[1].announcement_date) {
        return Err(DataError::Validation(format!(
            "more than one announcement for {} on {}",
            firm.firm_id, w[0].announcement_date
        )));
    }
    if let (Some(first), Some(last)) = (firm.first_date(), firm.last_date()) {
        if let Some(e) = firm
            .events
            .iter()
            .find(|e| e.announcement_date < first || e.announcement_date > last)
        {
            return Err(DataError::Validation(format!(
                "announcement for {} on {} lies outside its price history {first}..{last}",
                firm.firm_id, e.announcement_date
            )));
        }
    }
    Ok((firm, duplicates))
}

/// Reads the four input files into a firm-indexed dataset.
pub fn ingest(config: &IngestConfig, exec: Execution) -> Result<(Dataset, IngestReport), DataError> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(DataError::Config(format!(
            "unsupported schema version {:?}, this build reads {SCHEMA_VERSION:?}",
            config.schema_version
        )));
    }
    let schema = config.schema_version.as_str();
    let prices = read_prices(&config.prices, schema)?;
    let (fundamentals, fundamental_rows) = read_fundamentals(&config.fundamentals, schema)?;
    let articles = read_news(&config.news, schema)?;
    let events = read_events(&config.events, schema)?;

    let mut report = IngestReport {
        fundamental_rows,
        articles_read: articles.len(),
        events: events.len(),
        ..IngestReport::default()
    };

    let mut firms: BTreeMap<FirmId, FirmDataset> = prices
        .into_iter()
        .map(|(id, bars)| {
            let mut f = FirmDataset::new(id.clone());
            f.bars = bars.into_iter().map(|(_, b)| b).collect();
            (id, f)
        })
        .collect();
    for (id, recs) in fundamentals {
        match firms.get_mut(&id) {
            Some(f) => f.fundamentals.extend(recs.into_values()),
            None => report.orphan_rows += recs.len(),
        }
    }
    for a in articles {
        match firms.get_mut(&a.firm_id) {
            Some(f) => f.articles.push(a),
            None => report.orphan_rows += 1,
        }
    }
    for (line, id, e) in events {
        match firms.get_mut(&id) {
            Some(f) => f.events.push(e),
            None => {
                return Err(DataError::Validation(format!(
                    "{}:{line}: announcement for {id}, which has no price series",
                    config.events.display()
                )))
            }
        }
    }

    let merged: Vec<FirmDataset> = firms.into_values().collect();
    let normalized = exec::try_map(exec, &merged, |f| normalize_firm(f.clone()))?;
    let mut dataset = Dataset::default();
    for (firm, dups) in normalized {
        report.duplicate_articles += dups;
        dataset.firms.insert(firm.firm_id.clone(), firm);
    }
    report.firms = dataset.firms.len();
    report.bars = dataset.iter().map(|f| f.bars.len()).sum();
    report.articles_stored = dataset.iter().map(|f| f.articles.len()).sum();
    report.flagged_firms = dataset.flagged_firms().into_iter().cloned().collect();
    Ok((dataset, report))
}

/// Renders the four store files in their canonical byte form.
pub fn render_store(dataset: &Dataset) -> Result<[(&'static str, Vec<u8>); 4], DataError> {
    let mut prices = format!("#schema={SCHEMA_VERSION}\nfirm_id,date,adjusted_close\n");
    let mut fundamentals = format!("#schema={SCHEMA_VERSION}\nfirm_id,effective_date,metric,value\n");
    let mut news = format!("{{\"schema\":\"{SCHEMA_VERSION}\"}}\n");
    let mut events = format!("#schema={SCHEMA_VERSION}\nfirm_id,announcement_date,after_market_close\n");
    for f in dataset.iter() {
        check_csv_safe(f.firm_id.as_str())?;
        for b in &f.bars {
            let _ = writeln!(prices, "{},{},{}", f.firm_id, b.date, b.adjusted_close);
        }
        for rec in &f.fundamentals {
            for m in Metric::ALL {
                let v = rec.get(m).map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(fundamentals, "{},{},{},{}", f.firm_id, rec.effective_date, m.name(), v);
            }
        }
        for a in &f.articles {
            news.push_str(&serde_json::to_string(a).map_err(|e| DataError::Validation(e.to_string()))?);
            news.push('\n');
        }
        for e in &f.events {
            let _ = writeln!(events, "{},{},{}", f.firm_id, e.announcement_date, e.after_market_close);
        }
    }
    Ok([
        (PRICES_FILE, prices.into_bytes()),
        (FUNDAMENTALS_FILE, fundamentals.into_bytes()),
        (NEWS_FILE, news.into_bytes()),
        (EVENTS_FILE, events.into_bytes()),
    ])
}

fn check_csv_safe(id: &str) -> Result<(), DataError> {
    if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
        return Err(DataError::Validation(format!("firm id {id:?} cannot be written to a CSV store")));
    }
    Ok(())
}

pub fn digest_files(files: &[(&str, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

pub fn manifest_for(dataset: &Dataset) -> Result<DatasetManifest, DataError> {
    let files = render_store(dataset)?;
    Ok(DatasetManifest {
        schema_version: SCHEMA_VERSION.to_string(),
        row_counts: row_counts(dataset),
        digest: digest_files(&files),
    })
}

fn row_counts(dataset: &Dataset) -> RowCounts {
    RowCounts {
        prices: dataset.iter().map(|f| f.bars.len()).sum(),
        fundamentals: dataset.iter().map(|f| f.fundamentals.len() * Metric::ALL.len()).sum(),
        news: dataset.iter().map(|f| f.articles.len()).sum(),
        events: dataset.event_count(),
    }
}

/// Writes the dataset as a store directory (the four input files plus a
/// manifest). The directory is created if needed; existing store files are
/// never overwritten.
pub fn write_store(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest, DataError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = render_store(dataset)?;
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION.to_string(),
        row_counts: row_counts(dataset),
        digest: digest_files(&files),
    };
    for (name, bytes) in &files {
        write_new(&dir.join(name), bytes)?;
    }
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| DataError::Validation(e.to_string()))?;
    write_new(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

/// Reads a store directory written by [`write_store`] and checks its digest.
pub fn read_store(dir: &Path, exec: Execution) -> Result<(Dataset, DatasetManifest), DataError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&read_text(&manifest_path)?)
        .map_err(|e| malformed(&manifest_path, e.line() as u64, "manifest", e.to_string()))?;
    let (dataset, _) = ingest(&IngestConfig::in_dir(dir), exec)?;
    let actual = manifest_for(&dataset)?;
    if actual.digest != manifest.digest {
        return Err(DataError::Validation(format!(
            "store {} does not match its manifest digest",
            dir.display()
        )));
    }
    Ok((dataset, manifest))
}
