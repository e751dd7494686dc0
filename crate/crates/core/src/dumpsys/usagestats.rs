//! `dumpsys usagestats`
//!
//! The "Last 24 hour events" section carries second-precision lifecycle
//! events. Weekly, monthly and yearly sections only carry per-package
//! aggregates whose last-used time is coarse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ensure_nonempty, is_json_lines, key_values, lookup, Parsed};
use crate::error::{ParseError, ParseWarning};
use crate::time::{DisplayZone, Timestamp, DETAIL_WINDOW_SECONDS};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UsageEventType {
    ActivityResumed,
    ActivityPaused,
    ForegroundServiceStart,
    ForegroundServiceStop,
    NotificationInterruption,
    Other(String),
}

impl UsageEventType {
    pub fn as_str(&self) -> &str {
        match self {
            UsageEventType::ActivityResumed => "ACTIVITY_RESUMED",
            UsageEventType::ActivityPaused => "ACTIVITY_PAUSED",
            UsageEventType::ForegroundServiceStart => "FOREGROUND_SERVICE_START",
            UsageEventType::ForegroundServiceStop => "FOREGROUND_SERVICE_STOP",
            UsageEventType::NotificationInterruption => "NOTIFICATION_INTERRUPTION",
            UsageEventType::Other(raw) => raw,
        }
    }
}

impl FromStr for UsageEventType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ACTIVITY_RESUMED" => UsageEventType::ActivityResumed,
            "ACTIVITY_PAUSED" => UsageEventType::ActivityPaused,
            "FOREGROUND_SERVICE_START" => UsageEventType::ForegroundServiceStart,
            "FOREGROUND_SERVICE_STOP" => UsageEventType::ForegroundServiceStop,
            "NOTIFICATION_INTERRUPTION" => UsageEventType::NotificationInterruption,
            other => UsageEventType::Other(other.to_string()),
        })
    }
}

impl fmt::Display for UsageEventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for UsageEventType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for UsageEventType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UsageEvent {
    pub at: Timestamp,
    pub package: String,
    pub event_type: UsageEventType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateWindow {
    Week,
    Month,
    Year,
}

impl AggregateWindow {
    pub fn header(self) -> &'static str {
        match self {
            AggregateWindow::Week => "In-memory weekly stats",
            AggregateWindow::Month => "In-memory monthly stats",
            AggregateWindow::Year => "In-memory yearly stats",
        }
    }

    /// How far back the window reaches from the capture time.
    pub fn seconds(self) -> i64 {
        const DAY: i64 = 86_400;
        match self {
            AggregateWindow::Week => 7 * DAY,
            AggregateWindow::Month => 30 * DAY,
            AggregateWindow::Year => 365 * DAY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Second,
    /// Hours/minutes/seconds cannot be trusted.
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UsageAggregate {
    pub window: AggregateWindow,
    pub package: String,
    pub last_used: Timestamp,
    pub precision: Precision,
    pub use_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub capture_time: Timestamp,
    /// Ascending by `at`, ties in input order.
    pub events_24h: Vec<UsageEvent>,
    pub aggregates: Vec<UsageAggregate>,
}

impl UsageReport {
    pub fn empty(capture_time: Timestamp) -> Self {
        UsageReport {
            capture_time,
            events_24h: Vec::new(),
            aggregates: Vec::new(),
        }
    }

    /// Earliest instant still covered by second-precision events.
    pub fn window_start(&self) -> Timestamp {
        self.capture_time.saturating_sub(DETAIL_WINDOW_SECONDS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Events24h,
    Daily,
    Aggregate(AggregateWindow),
}

fn section_for(line: &str) -> Option<Section> {
    if line.starts_with("Last 24 hour events") {
        Some(Section::Events24h)
    } else if line.starts_with("In-memory daily stats") {
        Some(Section::Daily)
    } else {
        [
            AggregateWindow::Week,
            AggregateWindow::Month,
            AggregateWindow::Year,
        ]
        .into_iter()
        .find(|w| line.starts_with(w.header()))
        .map(Section::Aggregate)
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum JsonLine {
    Event(UsageEvent),
    Aggregate {
        window: AggregateWindow,
        package: String,
        last_used: Timestamp,
        use_count: u64,
    },
}

/// Parses usagestats text. Wall-clock strings are read in `zone`; events
/// outside `[capture_time - 24h, capture_time]` are dropped with a warning.
pub fn parse_usagestats(
    text: &str,
    capture_time: Timestamp,
    zone: DisplayZone,
) -> Result<Parsed<UsageReport>, ParseError> {
    ensure_nonempty(text)?;
    let mut report = UsageReport::empty(capture_time);
    let mut warnings = Vec::new();
    let mut skipped = 0;

    if is_json_lines(text) {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            match serde_json::from_str::<JsonLine>(line) {
                Ok(JsonLine::Event(e)) => push_event(&mut report, e, idx + 1, &mut warnings),
                Ok(JsonLine::Aggregate {
                    window,
                    package,
                    last_used,
                    use_count,
                }) => report.aggregates.push(UsageAggregate {
                    window,
                    package,
                    last_used,
                    precision: Precision::Coarse,
                    use_count,
                }),
                Err(e) => warnings.push(ParseWarning::new(idx + 1, format!("bad JSON line: {e}"))),
            }
        }
    } else {
        let mut section = Section::Preamble;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(s) = section_for(line) {
                section = s;
                continue;
            }
            match section {
                Section::Preamble | Section::Events24h if line.starts_with("time=") => {
                    match event_from_line(line, zone) {
                        Ok(e) => push_event(&mut report, e, lineno, &mut warnings),
                        Err(msg) => warnings.push(ParseWarning::new(lineno, msg)),
                    }
                }
                Section::Aggregate(window) if line.starts_with("package=") => {
                    match aggregate_from_line(line, window, zone) {
                        Ok(a) => report.aggregates.push(a),
                        Err(msg) => warnings.push(ParseWarning::new(lineno, msg)),
                    }
                }
                _ => skipped += 1,
            }
        }
    }

    // Vec::sort_by_key is stable, so equal times keep input order.
    report.events_24h.sort_by_key(|e| e.at);
    Ok(Parsed {
        value: report,
        warnings,
        skipped_lines: skipped,
    })
}

fn push_event(
    report: &mut UsageReport,
    e: UsageEvent,
    lineno: usize,
    warnings: &mut Vec<ParseWarning>,
) {
    if e.package.is_empty() {
        warnings.push(ParseWarning::new(lineno, "event without package"));
    } else if e.at < report.window_start() || e.at > report.capture_time {
        warnings.push(ParseWarning::new(
            lineno,
            format!("event at {} outside the 24 h detail window, dropped", e.at),
        ));
    } else {
        report.events_24h.push(e);
    }
}

fn event_from_line(line: &str, zone: DisplayZone) -> Result<UsageEvent, String> {
    let kv = key_values(line);
    let time = lookup(&kv, "time").ok_or("event line without time")?;
    let at = zone.parse_local(time).map_err(|e| e.to_string())?;
    let event_type = lookup(&kv, "type").ok_or("event line without type")?;
    let package = lookup(&kv, "package").ok_or("event line without package")?;
    Ok(UsageEvent {
        at,
        package: package.to_string(),
        event_type: event_type.parse().unwrap_or_else(|never| match never {}),
    })
}

fn aggregate_from_line(
    line: &str,
    window: AggregateWindow,
    zone: DisplayZone,
) -> Result<UsageAggregate, String> {
    let kv = key_values(line);
    let package = lookup(&kv, "package")
        .filter(|p| !p.is_empty())
        .ok_or("aggregate without package")?;
    let last = lookup(&kv, "lastTimeUsed").ok_or("aggregate without lastTimeUsed")?;
    let last_used = zone.parse_local(last).map_err(|e| e.to_string())?;
    let use_count = match lookup(&kv, "appLaunchCount").or_else(|| lookup(&kv, "launchCount")) {
        Some(n) => n
            .parse::<u64>()
            .map_err(|_| format!("bad launch count {n:?}"))?,
        None => 0,
    };
    Ok(UsageAggregate {
        window,
        package: package.to_string(),
        last_used,
        precision: Precision::Coarse,
        use_count,
    })
}
