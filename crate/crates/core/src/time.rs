//! UTC timestamps as signed seconds since the Unix epoch.

use chrono::{DateTime, Months, NaiveDate, NaiveDateTime, TimeZone, Utc};

use crate::{Error, Result};

pub type Timestamp = i64;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: f64 = 365.25;

pub fn days_between(earlier: Timestamp, later: Timestamp) -> f64 {
    (later - earlier) as f64 / SECONDS_PER_DAY
}

/// Parses RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC), a bare date, or integer seconds.
pub fn parse_timestamp(text: &str) -> Result<Timestamp> {
    let text = text.trim();
    if let Ok(secs) = text.parse::<i64>() {
        return Ok(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    Err(Error::invalid(format!("unparseable timestamp `{text}`")))
}

pub fn format_timestamp(ts: Timestamp) -> String {
    match Utc.timestamp_opt(ts, 0).single() {
        Some(dt) => dt.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        None => ts.to_string(),
    }
}

/// Midnight UTC of the day containing `ts`.
pub fn start_of_day(ts: Timestamp) -> Timestamp {
    ts.div_euclid(86_400) * 86_400
}

/// `ts` shifted by whole calendar months (day clamped to the month's end).
pub fn add_months(ts: Timestamp, months: u32) -> Timestamp {
    let dt = Utc.timestamp_opt(ts, 0).single().expect("timestamp in range");
    dt.checked_add_months(Months::new(months))
        .expect("date overflow")
        .timestamp()
}

/// Serde adapter: writes ISO-8601, reads ISO-8601 or integer seconds.
pub mod iso8601 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::{format_timestamp, parse_timestamp, Timestamp};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Text(t) => parse_timestamp(&t).map_err(de::Error::custom),
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
            match ts {
                Some(ts) => s.serialize_str(&format_timestamp(*ts)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
            match Option::<Raw>::deserialize(d)? {
                None => Ok(None),
                Some(Raw::Int(v)) => Ok(Some(v)),
                Some(Raw::Text(t)) if t.trim().is_empty() => Ok(None),
                Some(Raw::Text(t)) => parse_timestamp(&t).map(Some).map_err(de::Error::custom),
            }
        }
    }
}
