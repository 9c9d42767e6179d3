//! Recognised time-value layouts and their scalar storage.
//!
//! Time cells are stored as a single `f64` so rows can be sorted and
//! compared uniformly:
//!
//! | format          | text example      | stored value                  |
//! |-----------------|-------------------|-------------------------------|
//! | `DatetimeYMDH`  | `2014/05/01/13`   | hours since 1970-01-01 00:00  |
//! | `HourMinute`    | `13:45`           | minute of day                 |
//! | `MinSecMs`      | `03:25:127`       | elapsed milliseconds          |
//! | `OrdinalIndex`  | `0.202`           | the number itself             |

use chrono::{Datelike, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeFormat {
    /// Calendar timestamp with hour resolution, e.g. `2014/05/01/13`.
    DatetimeYMDH,
    /// Clock time within a day, e.g. `13:45`.
    HourMinute,
    /// Elapsed time, e.g. `03:25:127` (minute:second:millisecond).
    MinSecMs,
    /// A plain number whose order is all that matters.
    OrdinalIndex,
}

fn epoch() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(1970, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch")
}

fn digits(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl TimeFormat {
    /// Pattern-based formats, in detection priority order.
    pub const PATTERNED: [TimeFormat; 3] = [
        TimeFormat::MinSecMs,
        TimeFormat::HourMinute,
        TimeFormat::DatetimeYMDH,
    ];

    /// The patterned format that `text` matches, if any. Plain numbers never match.
    pub fn detect(text: &str) -> Option<TimeFormat> {
        Self::PATTERNED
            .into_iter()
            .find(|f| f.parse(text).is_some())
    }

    /// Parse `text` into the stored scalar for this format.
    pub fn parse(self, text: &str) -> Option<f64> {
        let text = text.trim();
        match self {
            TimeFormat::MinSecMs => {
                let parts: Vec<&str> = text.split(':').collect();
                if parts.len() != 3 || parts[2].len() != 3 {
                    return None;
                }
                let (m, s, ms) = (digits(parts[0])?, digits(parts[1])?, digits(parts[2])?);
                if s >= 60 {
                    return None;
                }
                Some((m * 60_000 + s * 1000 + ms) as f64)
            }
            TimeFormat::HourMinute => {
                let parts: Vec<&str> = text.split(':').collect();
                if parts.len() != 2 {
                    return None;
                }
                let (h, m) = (digits(parts[0])?, digits(parts[1])?);
                if h >= 24 || m >= 60 {
                    return None;
                }
                Some((h * 60 + m) as f64)
            }
            TimeFormat::DatetimeYMDH => {
                let parts: Vec<&str> = text.split(['/', '-', ' ', 'T']).collect();
                if parts.len() != 4 {
                    return None;
                }
                let year = i32::try_from(digits(parts[0])?).ok()?;
                let month = u32::try_from(digits(parts[1])?).ok()?;
                let day = u32::try_from(digits(parts[2])?).ok()?;
                let hour = u32::try_from(digits(parts[3])?).ok()?;
                let dt = NaiveDate::from_ymd_opt(year, month, day)?.and_hms_opt(hour, 0, 0)?;
                Some((dt - epoch()).num_hours() as f64)
            }
            TimeFormat::OrdinalIndex => text.parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }

    /// Render a stored scalar back into this format's text layout.
    pub fn format(self, value: f64) -> String {
        match self {
            TimeFormat::MinSecMs => {
                let (m, s, ms) = split_min_sec_ms(value);
                format!("{m:02}:{s:02}:{ms:03}")
            }
            TimeFormat::HourMinute => {
                let (h, m) = split_hour_minute(value);
                format!("{h:02}:{m:02}")
            }
            TimeFormat::DatetimeYMDH => match split_ymdh(value) {
                Some((y, mo, d, h)) => format!("{y:02}/{mo:02}/{d:02}/{h:02}"),
                None => format!("{value}"),
            },
            TimeFormat::OrdinalIndex => format!("{value}"),
        }
    }
}

/// (year, month, day, hour) of a stored `DatetimeYMDH` value.
pub fn split_ymdh(value: f64) -> Option<(i32, u32, u32, u32)> {
    let dt = epoch().checked_add_signed(chrono::TimeDelta::try_hours(value.round() as i64)?)?;
    Some((dt.year(), dt.month(), dt.day(), dt.hour()))
}

/// (hour, minute) of a stored `HourMinute` value.
pub fn split_hour_minute(value: f64) -> (u32, u32) {
    let total = value.round().max(0.0) as u32;
    (total / 60, total % 60)
}

/// (minute, second, millisecond) of a stored `MinSecMs` value.
pub fn split_min_sec_ms(value: f64) -> (u64, u32, u32) {
    let total = value.round().max(0.0) as u64;
    (total / 60_000, ((total / 1000) % 60) as u32, (total % 1000) as u32)
}
