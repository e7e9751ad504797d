//! Synthetic firm universe for desk-scale verification.
//!
//! Prices follow a driftless geometric random walk over the exchange
//! calendar. Each firm announces quarterly; the log return on the resolved
//! announcement price day is drawn with its own volatility, which sets the
//! label mix (0.0308 gives about 67% NEUTRAL at a 3% threshold). News is a
//! background stream of random tone plus a burst of "signal" articles before
//! each announcement whose tone matches the realised direction with
//! probability `sentiment_fidelity` and is uniformly random otherwise.
//! Fundamentals are independent noise around firm-level bases.

use chrono::{DateTime, Days, FixedOffset, Months, NaiveDate, TimeZone};
use chrono_tz::America::New_York;
use serde::{Deserialize, Serialize};

use super::calendar::{is_trading_day, is_weekend, trading_days};
use super::io::normalize_firm;
use super::types::{Dataset, EarningsEvent, FirmDataset, FirmId, FundamentalRecord, Metric, NewsArticle, PriceBar};
use super::DataError;
use crate::exec::{self, Execution};
use crate::labeling::{classify, Direction};
use crate::numerics::RngStream;
pub use crate::sentiment::{NEGATIVE_WORDS, NEUTRAL_WORDS, POSITIVE_WORDS};

const FILLER_WORDS: [&str; 8] = [
    "quarter", "company", "shares", "analysts", "market", "investors", "sector", "guidance",
];

/// Typical magnitude of each metric, in [`Metric::ALL`] order.
const METRIC_SCALES: [f64; 15] = [
    0.10, 0.15, 0.05, 1.0, 1.5, 1.0e9, 0.40, 0.15, 0.8, 8.0, 0.05, 3.0, 25.0, 5.0e10, 5.0e8,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub firms: usize,
    /// Calendar span of the sample, starting at `start_date`.
    pub months: u32,
    pub start_date: NaiveDate,
    /// Standard deviation of ordinary daily log returns.
    pub daily_volatility: f64,
    /// Standard deviation of the log return on the announcement price day.
    pub announcement_volatility: f64,
    pub after_close_probability: f64,
    pub fundamental_missing_rate: f64,
    /// Probability that pre-announcement news tone matches the realised
    /// direction.
    pub sentiment_fidelity: f64,
    /// Threshold the generator uses to decide the realised direction.
    pub label_threshold: f64,
    pub signal_articles: usize,
    /// Signal articles fall on the `signal_horizon_days` calendar days before
    /// the announcement date.
    pub signal_horizon_days: u32,
    /// Probability of one background article per firm per calendar day.
    pub background_article_rate: f64,
    /// Probability that an article is delivered twice by overlapping feed
    /// batches (removed again during normalisation).
    pub duplicate_article_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            firms: 500,
            months: 10,
            start_date: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            daily_volatility: 0.015,
            announcement_volatility: 0.0308,
            after_close_probability: 0.5,
            fundamental_missing_rate: 0.1,
            sentiment_fidelity: 0.5,
            label_threshold: 0.03,
            signal_articles: 4,
            signal_horizon_days: 7,
            background_article_rate: 0.15,
            duplicate_article_rate: 0.02,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(DataError::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        if self.firms < 1 {
            return Err(DataError::Config("synthetic spec needs at least one firm".into()));
        }
        if self.months < 2 {
            return Err(DataError::Config(format!("synthetic spec needs at least 2 months, got {}", self.months)));
        }
        prob("sentiment_fidelity", self.sentiment_fidelity)?;
        prob("after_close_probability", self.after_close_probability)?;
        prob("fundamental_missing_rate", self.fundamental_missing_rate)?;
        prob("background_article_rate", self.background_article_rate)?;
        prob("duplicate_article_rate", self.duplicate_article_rate)?;
        for (name, v) in [
            ("daily_volatility", self.daily_volatility),
            ("announcement_volatility", self.announcement_volatility),
            ("label_threshold", self.label_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DataError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.signal_articles > 0 && self.signal_horizon_days == 0 {
            return Err(DataError::Config("signal_horizon_days must be positive".into()));
        }
        Ok(())
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date
            .checked_add_months(Months::new(self.months))
            .and_then(|d| d.pred_opt())
            .expect("date in range")
    }

    /// E|x| for ordinary daily log returns x ~ N(0, σ²).
    pub fn expected_mean_abs_daily_return(&self) -> f64 {
        self.daily_volatility * (2.0 / std::f64::consts::PI).sqrt()
    }

    pub fn expected_announcement_variance(&self) -> f64 {
        self.announcement_volatility * self.announcement_volatility
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tone {
    Positive,
    Negative,
    Neutral,
}

impl Tone {
    const ALL: [Tone; 3] = [Tone::Positive, Tone::Negative, Tone::Neutral];

    fn of(direction: Direction) -> Self {
        match direction {
            Direction::Up => Tone::Positive,
            Direction::Down => Tone::Negative,
            Direction::Neutral => Tone::Neutral,
        }
    }

    fn words(self) -> &'static [&'static str] {
        match self {
            Tone::Positive => &POSITIVE_WORDS,
            Tone::Negative => &NEGATIVE_WORDS,
            Tone::Neutral => &NEUTRAL_WORDS,
        }
    }
}

/// First trading day on/after (`strict = false`) or after (`strict = true`)
/// `date`.
fn next_session(date: NaiveDate, strict: bool) -> NaiveDate {
    let mut d = if strict { date.succ_opt().expect("date in range") } else { date };
    while !is_trading_day(d) {
        d = d.succ_opt().expect("date in range");
    }
    d
}

fn local_timestamp(date: NaiveDate, hour: u32, minute: u32) -> DateTime<FixedOffset> {
    let naive = date.and_hms_opt(hour, minute, 0).expect("valid time");
    New_York
        .from_local_datetime(&naive)
        .earliest()
        .expect("hours used here are never skipped by DST")
        .fixed_offset()
}

fn article_text(firm: &FirmId, tone: Tone, rng: &mut RngStream) -> (String, String) {
    let words = tone.words();
    let headline = format!("{firm} {} {}", words[rng.index(words.len())], words[rng.index(words.len())]);
    let mut body: Vec<&str> = (0..3).map(|_| words[rng.index(words.len())]).collect();
    body.extend((0..2).map(|_| FILLER_WORDS[rng.index(FILLER_WORDS.len())]));
    rng.shuffle(&mut body);
    (headline, body.join(" "))
}

fn generate_firm(spec: &SyntheticSpec, index: usize, days: &[NaiveDate], end: NaiveDate, rng: &RngStream) -> Result<(FirmDataset, usize), DataError> {
    let width = spec.firms.saturating_sub(1).to_string().len().max(4);
    let id = FirmId(format!("F{index:0width$}"));
    let mut firm = FirmDataset::new(id.clone());

    // announcements
    let mut ev_rng = rng.substream("events");
    let last_allowed = end - Days::new(10);
    let mut day = spec.start_date + Days::new(35 + ev_rng.index(91) as u64);
    while day <= last_allowed {
        let mut ann = day;
        while is_weekend(ann) {
            ann = ann.succ_opt().expect("date in range");
        }
        if ann > last_allowed {
            break;
        }
        firm.events.push(EarningsEvent {
            announcement_date: ann,
            after_market_close: ev_rng.bernoulli(spec.after_close_probability),
        });
        let jitter = ev_rng.index(7) as i64 - 3;
        day = ann
            .checked_add_signed(chrono::Duration::days(91 + jitter))
            .expect("date in range");
    }
    let ea_days: Vec<NaiveDate> = firm
        .events
        .iter()
        .map(|e| next_session(e.announcement_date, e.after_market_close))
        .collect();

    // prices
    let mut px_rng = rng.substream("prices");
    let mut price = px_rng.uniform_range(20.0, 200.0);
    let mut directions = vec![Direction::Neutral; firm.events.len()];
    for (k, &d) in days.iter().enumerate() {
        if k > 0 {
            let prev = price;
            match ea_days.iter().position(|&e| e == d) {
                Some(ev) => {
                    price *= (spec.announcement_volatility * px_rng.normal()).exp();
                    directions[ev] = classify((price - prev) / prev, spec.label_threshold);
                }
                None => price *= (spec.daily_volatility * px_rng.normal()).exp(),
            }
        }
        firm.bars.push(PriceBar {
            date: d,
            adjusted_close: price,
        });
    }

    // fundamentals
    let mut fu_rng = rng.substream("fundamentals");
    let bases: Vec<f64> = METRIC_SCALES
        .iter()
        .map(|s| s * (0.5 * fu_rng.normal()).exp())
        .collect();
    let mut eff = spec.start_date;
    while eff <= end {
        let mut rec = FundamentalRecord::empty(eff);
        for m in Metric::ALL {
            let v = bases[m.index()] * (1.0 + 0.05 * fu_rng.normal());
            if !fu_rng.bernoulli(spec.fundamental_missing_rate) {
                rec.values[m.index()] = Some(v);
            }
        }
        firm.fundamentals.push(rec);
        eff = eff + Days::new(91);
    }

    // news
    let mut nw_rng = rng.substream("news");
    let mut raw = Vec::new();
    for d in spec.start_date.iter_days().take_while(|d| *d <= end) {
        if nw_rng.bernoulli(spec.background_article_rate) {
            let tone = Tone::ALL[nw_rng.index(3)];
            let ts = local_timestamp(d, 6 + nw_rng.index(16) as u32, nw_rng.index(60) as u32);
            let (headline, body) = article_text(&id, tone, &mut nw_rng);
            raw.push((ts, headline, body));
        }
    }
    for (e, &direction) in firm.events.iter().zip(&directions) {
        let tone = if nw_rng.bernoulli(spec.sentiment_fidelity) {
            Tone::of(direction)
        } else {
            Tone::ALL[nw_rng.index(3)]
        };
        for _ in 0..spec.signal_articles {
            let back = 1 + nw_rng.index(spec.signal_horizon_days as usize) as u64;
            let d = e.announcement_date - Days::new(back);
            let ts = local_timestamp(d, 9 + nw_rng.index(7) as u32, nw_rng.index(60) as u32);
            let (headline, body) = article_text(&id, tone, &mut nw_rng);
            raw.push((ts, headline, body));
        }
    }
    for (ts, headline, body) in raw {
        let copies = if nw_rng.bernoulli(spec.duplicate_article_rate) { 2 } else { 1 };
        for _ in 0..copies {
            firm.articles.push(NewsArticle {
                firm_id: id.clone(),
                timestamp: ts,
                headline: headline.clone(),
                body: body.clone(),
            });
        }
    }
    normalize_firm(firm)
}

/// Generates the synthetic universe. Firms are generated independently from
/// per-firm substreams, so the output does not depend on `exec`.
pub fn generate_synthetic(spec: &SyntheticSpec, exec: Execution) -> Result<Dataset, DataError> {
    spec.validate()?;
    let root = RngStream::named(spec.seed, "datagen");
    let end = spec.end_date();
    let days = trading_days(spec.start_date, end);
    if days.len() < 2 {
        return Err(DataError::Config("synthetic span contains fewer than two sessions".into()));
    }
    let firms = exec::map_range(exec, spec.firms, |i| {
        generate_firm(spec, i, &days, end, &root.substream(&format!("firm/{i}")))
    });
    let mut dataset = Dataset::default();
    for f in firms {
        let (firm, _duplicates) = f?;
        dataset.firms.insert(firm.firm_id.clone(), firm);
    }
    Ok(dataset)
}
