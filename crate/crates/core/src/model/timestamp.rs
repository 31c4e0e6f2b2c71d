use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("malformed timestamp {0:?}, expected dd/mm/yyyy:hh:mm")]
    Malformed(String),
    #[error("invalid calendar date in {0:?}")]
    InvalidDate(String),
    #[error("timestamp {t} is before deployment time {deployment}")]
    BeforeDeployment { t: Timestamp, deployment: Timestamp },
}

/// Civil date and time at minute resolution, written `dd/mm/yyyy:hh:mm`.
///
/// A trailing `:ss` is accepted on input and truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    pub fn new(day: u32, month: u32, year: i32, hour: u32, minute: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        let time = NaiveTime::from_hms_opt(hour, minute, 0)?;
        Some(Timestamp(date.and_time(time)))
    }

    /// Whole minutes from `earlier` to `self`, or `None` if `self` is earlier.
    pub fn minutes_since(&self, earlier: &Timestamp) -> Option<u64> {
        let mins = (self.0 - earlier.0).num_minutes();
        u64::try_from(mins).ok()
    }

    pub fn plus_minutes(&self, minutes: u64) -> Timestamp {
        Timestamp(self.0 + chrono::Duration::minutes(minutes as i64))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%d/%m/%Y:%H:%M"))
    }
}

fn field(s: &str, len: std::ops::RangeInclusive<usize>) -> Option<u32> {
    if !len.contains(&s.len()) || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for Timestamp {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || TimeError::Malformed(s.to_string());
        let (date, time) = s.split_once(':').ok_or_else(malformed)?;
        let mut dmy = date.split('/');
        let (Some(d), Some(m), Some(y), None) = (dmy.next(), dmy.next(), dmy.next(), dmy.next()) else {
            return Err(malformed());
        };
        let mut hms = time.split(':');
        let (Some(hh), Some(mm)) = (hms.next(), hms.next()) else {
            return Err(malformed());
        };
        let seconds = hms.next();
        if hms.next().is_some() {
            return Err(malformed());
        }
        let day = field(d, 1..=2).ok_or_else(malformed)?;
        let month = field(m, 1..=2).ok_or_else(malformed)?;
        let year = field(y, 4..=4).ok_or_else(malformed)?;
        let hour = field(hh, 1..=2).ok_or_else(malformed)?;
        let minute = field(mm, 1..=2).ok_or_else(malformed)?;
        if let Some(ss) = seconds {
            let sec = field(ss, 1..=2).ok_or_else(malformed)?;
            if sec >= 60 {
                return Err(malformed());
            }
        }
        if hour >= 24 || minute >= 60 {
            return Err(malformed());
        }
        let ts = Timestamp::new(day, month, year as i32, hour, minute)
            .ok_or_else(|| TimeError::InvalidDate(s.to_string()))?;
        debug_assert_eq!(ts.0.second(), 0);
        Ok(ts)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
