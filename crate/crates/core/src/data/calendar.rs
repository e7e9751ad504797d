//! Exchange calendar used by the synthetic generator: weekdays minus a fixed
//! set of full-day holidays.

use chrono::{Datelike, NaiveDate, Weekday};

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// New Year's Day, Independence Day, Thanksgiving (fourth Thursday of
/// November) and Christmas, without weekend observance shifts.
pub fn is_holiday(date: NaiveDate) -> bool {
    match (date.month(), date.day()) {
        (1, 1) | (7, 4) | (12, 25) => true,
        (11, d) => date.weekday() == Weekday::Thu && (22..=28).contains(&d),
        _ => false,
    }
}

pub fn is_trading_day(date: NaiveDate) -> bool {
    !is_weekend(date) && !is_holiday(date)
}

/// Trading days in `start..=end`.
pub fn trading_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| is_trading_day(*d))
        .collect()
}
