//! Numeric encodings of time values.
//!
//! Cyclical quantities (month, day, hour, minute of day) map onto the unit
//! circle so that the ends of a period sit next to each other: hour 23 lands
//! near hour 0 rather than far from it. Continuous elapsed times collapse to
//! integer milliseconds, and plain ordered indices become 0-based ranks.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::table::{split_hour_minute, split_min_sec_ms, split_ymdh, Column, ColumnKind, TimeFormat};

const MONTH_PERIOD: f64 = 12.0;
/// Fixed 30-day period regardless of the calendar month's length.
const DAY_PERIOD: f64 = 30.0;
const HOUR_PERIOD: f64 = 24.0;
pub const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodedTime {
    Datetime {
        year: i32,
        month_sin: f64,
        month_cos: f64,
        day_sin: f64,
        day_cos: f64,
        hour_sin: f64,
        hour_cos: f64,
    },
    MinuteOfDay {
        total_minutes: u32,
        sin: f64,
        cos: f64,
    },
    Continuous {
        milliseconds: u64,
    },
    Ordinal {
        rank: usize,
    },
}

impl EncodedTime {
    /// Every (sine, cosine) pair carried by this encoding.
    pub fn circle_pairs(&self) -> Vec<(f64, f64)> {
        match *self {
            EncodedTime::Datetime { month_sin, month_cos, day_sin, day_cos, hour_sin, hour_cos, .. } => {
                vec![(month_sin, month_cos), (day_sin, day_cos), (hour_sin, hour_cos)]
            }
            EncodedTime::MinuteOfDay { sin, cos, .. } => vec![(sin, cos)],
            EncodedTime::Continuous { .. } | EncodedTime::Ordinal { .. } => Vec::new(),
        }
    }
}

fn on_circle(value: f64, period: f64) -> (f64, f64) {
    let angle = TAU * value / period;
    (angle.sin(), angle.cos())
}

fn check_range(name: &str, value: i64, lo: i64, hi: i64) -> Result<()> {
    if (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {value} outside {lo}..={hi}")))
    }
}

/// Year passes through as an integer; month, day and hour become sine/cosine pairs.
pub fn encode_cyclical_datetime(year: i32, month: u32, day: u32, hour: u32) -> Result<EncodedTime> {
    check_range("month", month.into(), 1, 12)?;
    check_range("day", day.into(), 1, 31)?;
    check_range("hour", hour.into(), 0, 23)?;
    let (month_sin, month_cos) = on_circle(month as f64, MONTH_PERIOD);
    let (day_sin, day_cos) = on_circle(day as f64, DAY_PERIOD);
    let (hour_sin, hour_cos) = on_circle(hour as f64, HOUR_PERIOD);
    Ok(EncodedTime::Datetime { year, month_sin, month_cos, day_sin, day_cos, hour_sin, hour_cos })
}

/// Minute of day plus its position on a one-day cycle.
pub fn encode_minute_of_day(hour: u32, minute: u32) -> Result<EncodedTime> {
    check_range("hour", hour.into(), 0, 23)?;
    check_range("minute", minute.into(), 0, 59)?;
    let total_minutes = hour * 60 + minute;
    let (sin, cos) = on_circle(total_minutes as f64, MINUTES_PER_DAY as f64);
    Ok(EncodedTime::MinuteOfDay { total_minutes, sin, cos })
}

/// Elapsed `min:sec:ms` as integer milliseconds.
pub fn encode_continuous(minute: u64, second: u32, millisecond: u32) -> Result<u64> {
    check_range("second", second.into(), 0, 59)?;
    check_range("millisecond", millisecond.into(), 0, 999)?;
    minute
        .checked_mul(60_000)
        .and_then(|m| m.checked_add(u64::from(second) * 1000 + u64::from(millisecond)))
        .ok_or_else(|| Error::InvalidArgument(format!("minute = {minute} overflows")))
}

/// 0-based positions of already-sorted times; ties keep their order.
pub fn encode_ordinal(times: &[f64]) -> Vec<usize> {
    debug_assert!(times.windows(2).all(|w| w[0] <= w[1]), "times must be sorted");
    (0..times.len()).collect()
}

/// One numeric feature derived from a time column.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFeature {
    pub name: String,
    pub values: Vec<f64>,
    /// Sine/cosine features are already bounded; the rest are unbounded integers.
    pub bounded: bool,
}

/// Expand a (sorted, fully observed) time column into its encoded features.
pub fn encode_time_column(column: &Column) -> Result<Vec<TimeFeature>> {
    let ColumnKind::Time(format) = column.kind else {
        return Err(Error::InvalidArgument(format!("column '{}' is not a time column", column.name)));
    };
    let values: Vec<f64> = column
        .cells
        .iter()
        .map(|c| {
            c.as_number().ok_or_else(|| {
                Error::InvalidArgument(format!("time column '{}' has missing values", column.name))
            })
        })
        .collect::<Result<_>>()?;
    let feature = |suffix: &str, values: Vec<f64>, bounded: bool| TimeFeature {
        name: format!("{}:{suffix}", column.name),
        values,
        bounded,
    };

    let features = match format {
        TimeFormat::DatetimeYMDH => {
            let encoded: Vec<EncodedTime> = values
                .iter()
                .map(|&v| {
                    let (y, m, d, h) = split_ymdh(v)
                        .ok_or_else(|| Error::InvalidArgument(format!("bad datetime value {v}")))?;
                    encode_cyclical_datetime(y, m, d, h)
                })
                .collect::<Result<_>>()?;
            let pick = |f: fn(&EncodedTime) -> f64| encoded.iter().map(f).collect::<Vec<f64>>();
            macro_rules! field {
                ($name:ident) => {
                    |e: &EncodedTime| match e {
                        EncodedTime::Datetime { $name, .. } => *$name as f64,
                        _ => unreachable!(),
                    }
                };
            }
            vec![
                feature("year", pick(field!(year)), false),
                feature("mSine", pick(field!(month_sin)), true),
                feature("mCosine", pick(field!(month_cos)), true),
                feature("dSine", pick(field!(day_sin)), true),
                feature("dCosine", pick(field!(day_cos)), true),
                feature("hSine", pick(field!(hour_sin)), true),
                feature("hCosine", pick(field!(hour_cos)), true),
            ]
        }
        TimeFormat::HourMinute => {
            let mut total = Vec::with_capacity(values.len());
            let mut sin = Vec::with_capacity(values.len());
            let mut cos = Vec::with_capacity(values.len());
            for &v in &values {
                let (h, m) = split_hour_minute(v);
                if let EncodedTime::MinuteOfDay { total_minutes, sin: s, cos: c } = encode_minute_of_day(h, m)? {
                    total.push(total_minutes as f64);
                    sin.push(s);
                    cos.push(c);
                }
            }
            vec![
                feature("totalmin", total, false),
                feature("minSine", sin, true),
                feature("minCosine", cos, true),
            ]
        }
        TimeFormat::MinSecMs => {
            let ms = values
                .iter()
                .map(|&v| {
                    let (m, s, ms) = split_min_sec_ms(v);
                    encode_continuous(m, s, ms).map(|x| x as f64)
                })
                .collect::<Result<_>>()?;
            vec![feature("ms", ms, false)]
        }
        TimeFormat::OrdinalIndex => {
            let ranks = encode_ordinal(&values).into_iter().map(|r| r as f64).collect();
            vec![feature("rank", ranks, false)]
        }
    };
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: EncodedTime, i: usize) -> (f64, f64) {
        e.circle_pairs()[i]
    }

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn datetime_quarter_and_full_periods() {
        let e = encode_cyclical_datetime(2014, 12, 15, 6).unwrap();
        assert!(close(pair(e, 0), (0.0, 1.0)));
        assert!(close(pair(e, 1), (0.0, -1.0)));
        assert!(close(pair(e, 2), (1.0, 0.0)));
        let EncodedTime::Datetime { year, .. } = e else { panic!() };
        assert_eq!(year, 2014);
    }

    #[test]
    fn minute_of_day_values() {
        assert_eq!(
            encode_minute_of_day(0, 0).unwrap(),
            EncodedTime::MinuteOfDay { total_minutes: 0, sin: 0.0, cos: 1.0 }
        );
        let e = encode_minute_of_day(6, 0).unwrap();
        assert!(close(pair(e, 0), (1.0, 0.0)));
        let EncodedTime::MinuteOfDay { total_minutes, sin, cos } = encode_minute_of_day(23, 59).unwrap() else {
            panic!()
        };
        assert_eq!(total_minutes, 1439);
        // direct evaluation: sin(2*pi*1439/1440), cos(...)
        assert!((sin - (-0.004_363_309_284_747_432)).abs() < 1e-12);
        assert!((cos - 0.999_990_480_720_734_5).abs() < 1e-12);
    }

    #[test]
    fn continuous_values() {
        assert_eq!(encode_continuous(3, 25, 127).unwrap(), 205_127);
        assert_eq!(encode_continuous(0, 0, 0).unwrap(), 0);
        assert_eq!(encode_continuous(1, 0, 0).unwrap(), 60_000);
        assert!(encode_continuous(0, 60, 0).is_err());
        assert!(encode_continuous(0, 0, 1000).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(encode_cyclical_datetime(2000, 0, 1, 0).is_err());
        assert!(encode_cyclical_datetime(2000, 13, 1, 0).is_err());
        assert!(encode_cyclical_datetime(2000, 1, 32, 0).is_err());
        assert!(encode_cyclical_datetime(2000, 1, 1, 24).is_err());
        assert!(encode_minute_of_day(24, 0).is_err());
        assert!(encode_minute_of_day(0, 60).is_err());
    }

    #[test]
    fn ordinal_ranks() {
        assert_eq!(encode_ordinal(&[0.0, 0.2, 0.4]), vec![0, 1, 2]);
        assert_eq!(encode_ordinal(&[5.0]), vec![0]);
        assert_eq!(encode_ordinal(&[1.0, 1.0, 2.0]), vec![0, 1, 2]);
    }

    #[test]
    fn late_night_is_near_midnight() {
        let end = pair(encode_minute_of_day(23, 59).unwrap(), 0);
        let midnight = pair(encode_minute_of_day(0, 0).unwrap(), 0);
        let nine_pm = pair(encode_minute_of_day(21, 0).unwrap(), 0);
        let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        assert!(dist(end, midnight) < dist(end, nine_pm));
        // month 12 sits closer to month 1 than to month 10
        let m = |mo| pair(encode_cyclical_datetime(2000, mo, 1, 0).unwrap(), 0);
        assert!(dist(m(12), m(1)) < dist(m(12), m(10)));
    }

    #[test]
    fn column_expansion() {
        let col = Column::time("t", TimeFormat::HourMinute, &[0.0, 360.0, 1439.0]);
        let f = encode_time_column(&col).unwrap();
        assert_eq!(f.iter().map(|x| x.name.as_str()).collect::<Vec<_>>(), ["t:totalmin", "t:minSine", "t:minCosine"]);
        assert_eq!(f[0].values, vec![0.0, 360.0, 1439.0]);
        let col = Column::time("t", TimeFormat::DatetimeYMDH, &[TimeFormat::DatetimeYMDH.parse("2014/12/15/06").unwrap()]);
        let f = encode_time_column(&col).unwrap();
        assert_eq!(f.len(), 7);
        assert_eq!(f[0].values, vec![2014.0]);
        assert!((f[5].values[0] - 1.0).abs() < 1e-12);
    }
}
