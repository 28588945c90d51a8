//! Millisecond timestamps and duration parsing.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const SECOND_MS: u64 = 1_000;
pub const MINUTE_MS: u64 = 60 * SECOND_MS;
pub const HOUR_MS: u64 = 60 * MINUTE_MS;
pub const DAY_MS: u64 = 24 * HOUR_MS;

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn plus_ms(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }

    pub fn since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }

    /// Index of the UTC day this instant falls in.
    pub fn day_index(self) -> u64 {
        self.0 / DAY_MS
    }

    pub fn now() -> Timestamp {
        let d = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(d.as_millis() as u64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Timestamp {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(Timestamp)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid duration {0:?} (expected e.g. 90, 90s, 15m, 6h, 7d)")]
pub struct DurationParseError(pub String);

/// Parses `<n>[ms|s|m|h|d]` into milliseconds. A bare number is seconds.
pub fn parse_duration_ms(s: &str) -> Result<u64, DurationParseError> {
    let s = s.trim();
    let err = || DurationParseError(s.to_string());
    let split = s
        .find(|c: char| !c.is_ascii_digit() && c != '.')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.parse().map_err(|_| err())?;
    let scale = match unit.trim() {
        "" | "s" => SECOND_MS,
        "ms" => 1,
        "m" | "min" => MINUTE_MS,
        "h" => HOUR_MS,
        "d" => DAY_MS,
        _ => return Err(err()),
    };
    let ms = value * scale as f64;
    if !ms.is_finite() || ms < 0.0 {
        return Err(err());
    }
    Ok(ms.round() as u64)
}
