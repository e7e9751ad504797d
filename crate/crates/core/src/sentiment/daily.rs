use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, NaiveDate, Timelike};
use chrono_tz::America::New_York;

use super::{SentimentError, SentimentProvider, SentimentVector};
use crate::data::NewsArticle;
use crate::exec::{self, Execution};

/// Local hour at which the exchange closes.
pub const MARKET_CLOSE_HOUR: u32 = 16;

/// Calendar day an article is attributed to. Articles published at or after
/// the close count toward the next day.
pub fn assign_day(timestamp: &DateTime<FixedOffset>) -> NaiveDate {
    let local = timestamp.with_timezone(&New_York);
    let day = local.date_naive();
    if local.hour() >= MARKET_CLOSE_HOUR {
        day.succ_opt().expect("date in range")
    } else {
        day
    }
}

/// Coordinate-wise mean of one day's scores.
///
/// Inputs are summed in a canonical order so the result does not depend on
/// the order the articles arrived in.
pub fn aggregate_daily(scores: &[SentimentVector]) -> Result<SentimentVector, SentimentError> {
    if scores.is_empty() {
        return Err(SentimentError::Empty);
    }
    let mut sorted: Vec<[f64; 3]> = scores.iter().map(|v| v.to_array()).collect();
    sorted.sort_by(|a, b| {
        a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
    });
    let n = sorted.len() as f64;
    let mut sum = [0.0; 3];
    for v in &sorted {
        for k in 0..3 {
            sum[k] += v[k];
        }
    }
    let mean = sum.map(|s| (s / n).clamp(0.0, 1.0));
    SentimentVector::from_array(mean)
}

/// Scores every article and averages per attributed day. Days without news
/// are absent from the map.
pub fn daily_sentiment(
    articles: &[NewsArticle],
    provider: &dyn SentimentProvider,
    exec: Execution,
) -> Result<BTreeMap<NaiveDate, SentimentVector>, SentimentError> {
    let scored = exec::try_map(exec, articles, |a| provider.score(a).map(|v| (assign_day(&a.timestamp), v)))?;
    let mut by_day: BTreeMap<NaiveDate, Vec<SentimentVector>> = BTreeMap::new();
    for (day, v) in scored {
        by_day.entry(day).or_default().push(v);
    }
    by_day
        .into_iter()
        .map(|(d, vs)| aggregate_daily(&vs).map(|v| (d, v)))
        .collect()
}
