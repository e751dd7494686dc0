//! Timestamp conventions.
//!
//! Everything is stored as UTC epoch seconds. Wall-clock strings found in
//! dumps are interpreted in a [`DisplayZone`], and every rendered time
//! carries an explicit UTC offset.

use std::fmt;
use std::num::NonZeroU32;
use std::str::FromStr;

use chrono::{DateTime, LocalResult, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::TimeError;

/// Seconds in the usagestats second-precision detail window.
pub const DETAIL_WINDOW_SECONDS: i64 = 24 * 3600;

/// Default netstats bucket length.
pub const DEFAULT_BUCKET_SECONDS: u32 = 3600;

const RENDER_FORMAT: &str = "%Y-%m-%d %H:%M:%S %:z";

/// Seconds since the Unix epoch, UTC. Never negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Timestamp(i64);

impl Timestamp {
    pub const EPOCH: Timestamp = Timestamp(0);

    pub fn from_epoch(seconds: i64) -> Result<Self, TimeError> {
        if seconds < 0 {
            return Err(TimeError::NegativeEpoch(seconds));
        }
        // chrono cannot represent everything an i64 can.
        if DateTime::<Utc>::from_timestamp(seconds, 0).is_none() {
            return Err(TimeError::OutOfRange(seconds));
        }
        Ok(Timestamp(seconds))
    }

    pub fn epoch_seconds(self) -> i64 {
        self.0
    }

    /// Saturates at the epoch instead of going negative.
    pub fn saturating_sub(self, seconds: i64) -> Timestamp {
        Timestamp((self.0 - seconds).max(0))
    }

    pub fn add_seconds(self, seconds: i64) -> Timestamp {
        Timestamp((self.0 + seconds).max(0))
    }

    /// Truncates to a multiple of `seconds` (e.g. 60 for minute granularity).
    pub fn truncate_to(self, seconds: i64) -> Timestamp {
        Timestamp(self.0 - self.0.rem_euclid(seconds))
    }

    fn to_utc(self) -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp(self.0, 0).expect("validated on construction")
    }
}

impl TryFrom<i64> for Timestamp {
    type Error = TimeError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Timestamp::from_epoch(value)
    }
}

impl From<Timestamp> for i64 {
    fn from(t: Timestamp) -> i64 {
        t.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// IANA zone used to interpret device wall-clock strings and to render
/// report times. Defaults to Asia/Seoul.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DisplayZone(Tz);

impl Default for DisplayZone {
    fn default() -> Self {
        DisplayZone(Tz::Asia__Seoul)
    }
}

impl DisplayZone {
    pub fn new(tz: Tz) -> Self {
        DisplayZone(tz)
    }

    pub fn name(&self) -> &'static str {
        self.0.name()
    }

    /// `2023-05-11 01:14:16 +09:00`
    pub fn render(&self, t: Timestamp) -> String {
        t.to_utc()
            .with_timezone(&self.0)
            .format(RENDER_FORMAT)
            .to_string()
    }

    /// Renders at minute granularity, still with offset.
    pub fn render_minutes(&self, t: Timestamp) -> String {
        t.to_utc()
            .with_timezone(&self.0)
            .format("%Y-%m-%d %H:%M %:z")
            .to_string()
    }

    /// Renders naive local time as a device would print it (no offset).
    pub fn render_local(&self, t: Timestamp) -> String {
        t.to_utc()
            .with_timezone(&self.0)
            .format("%Y-%m-%d %H:%M:%S")
            .to_string()
    }

    /// Inverse of [`render`](Self::render). Accepts any explicit offset.
    pub fn parse_rendered(&self, s: &str) -> Result<Timestamp, TimeError> {
        let dt = DateTime::parse_from_str(s.trim(), RENDER_FORMAT)
            .map_err(|_| TimeError::Unparseable(s.to_string()))?;
        Timestamp::from_epoch(dt.timestamp())
    }

    /// Parses a naive device wall-clock string in this zone.
    ///
    /// Accepts `YYYY-MM-DD HH:MM[:SS[.fff]]` with either a space or `T`
    /// separator. Fractional seconds are dropped.
    pub fn parse_local(&self, s: &str) -> Result<Timestamp, TimeError> {
        let s = s.trim();
        let naive = [
            "%Y-%m-%d %H:%M:%S%.f",
            "%Y-%m-%dT%H:%M:%S%.f",
            "%Y-%m-%d %H:%M",
            "%Y-%m-%dT%H:%M",
        ]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .ok_or_else(|| TimeError::Unparseable(s.to_string()))?;
        let local = match self.0.from_local_datetime(&naive) {
            LocalResult::Single(dt) => dt,
            // DST fold: the earlier instant is the conventional choice.
            LocalResult::Ambiguous(early, _) => early,
            LocalResult::None => return Err(TimeError::NonexistentLocal(s.to_string())),
        };
        Timestamp::from_epoch(local.timestamp())
    }
}

impl FromStr for DisplayZone {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Tz>()
            .map(DisplayZone)
            .map_err(|_| TimeError::UnknownZone(s.to_string()))
    }
}

impl fmt::Display for DisplayZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for DisplayZone {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DisplayZone {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Positive bucket length in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct BucketDuration(NonZeroU32);

impl BucketDuration {
    pub fn new(seconds: u32) -> Result<Self, TimeError> {
        NonZeroU32::new(seconds)
            .map(BucketDuration)
            .ok_or(TimeError::ZeroDuration)
    }

    pub fn seconds(self) -> i64 {
        i64::from(self.0.get())
    }
}

impl Default for BucketDuration {
    fn default() -> Self {
        BucketDuration(NonZeroU32::new(DEFAULT_BUCKET_SECONDS).unwrap())
    }
}

impl TryFrom<u32> for BucketDuration {
    type Error = TimeError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        BucketDuration::new(value)
    }
}

impl From<BucketDuration> for u32 {
    fn from(d: BucketDuration) -> u32 {
        d.0.get()
    }
}

/// Half-open interval `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeBucket {
    pub start: Timestamp,
    pub duration_seconds: BucketDuration,
}

impl TimeBucket {
    pub fn end_exclusive(&self) -> i64 {
        self.start.epoch_seconds() + self.duration_seconds.seconds()
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t.epoch_seconds() < self.end_exclusive()
    }
}

/// Bucket whose start is `st` verbatim. No alignment is applied.
pub fn bucket_for(st: Timestamp, duration: BucketDuration) -> TimeBucket {
    TimeBucket {
        start: st,
        duration_seconds: duration,
    }
}
