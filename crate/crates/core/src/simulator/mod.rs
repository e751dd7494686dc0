//! Ground-truth scenarios rendered as synthetic dumps and host artifacts.
//!
//! The renderer writes the toolkit's own fixture grammar, not a byte-exact
//! copy of any device's output.

pub mod case_study;
pub mod oracle;
pub mod random;
pub mod render;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dumpsys::{AggregateWindow, LeaseEvent, LeaseEventKind, UsageEvent, UsageEventType};
use crate::error::ScenarioError;
use crate::time::{BucketDuration, Timestamp, DETAIL_WINDOW_SECONDS};

pub use oracle::{oracle_findings, signatures, FindingSignature, SessionSignature};
pub use random::{random_scenario, RandomBounds};
pub use render::{
    correlate_rendered, render_dumps, render_host_artifacts, synthetic_bundle,
    write_host_artifacts, PipelineError, PipelineOutput, RenderedDumps, RenderedHostArtifacts,
};

pub const WIFI_INTERFACE: &str = "wlan0";
/// Bytes per packet when deriving rp/tp from byte counts.
pub const PACKET_BYTES: u64 = 1500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSession {
    pub package: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiSession {
    pub ssid: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub assigned_ip: String,
    /// Whether the lease line names the SSID. Without it the lease can
    /// only be matched to traffic by time.
    #[serde(default = "yes")]
    pub announce_ssid: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostArtifactKind {
    Recentservers,
    KnownHosts,
}

impl fmt::Display for HostArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HostArtifactKind::Recentservers => "recentservers",
            HostArtifactKind::KnownHosts => "known_hosts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSideEntry {
    pub kind: HostArtifactKind,
    pub host: String,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub capture_time: Timestamp,
    #[serde(default, rename = "app_session")]
    pub app_sessions: Vec<AppSession>,
    #[serde(default, rename = "wifi_session")]
    pub wifi_sessions: Vec<WifiSession>,
    #[serde(default)]
    pub reboots: Vec<Timestamp>,
    #[serde(default, rename = "host_side")]
    pub host_side: Vec<HostSideEntry>,
}

/// Dotted quad exactly as it would be printed back.
fn canonical_ipv4(s: &str) -> bool {
    s.parse::<std::net::Ipv4Addr>()
        .is_ok_and(|a| a.to_string() == s)
}

fn plain_token(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c == '"' || c.is_control())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError(m));
        for (i, a) in self.app_sessions.iter().enumerate() {
            if a.start >= a.end {
                return err(format!("app_session[{i}]: start must precede end"));
            }
            if a.end > self.capture_time {
                return err(format!("app_session[{i}]: ends after capture_time"));
            }
            if !plain_token(&a.package) {
                return err(format!(
                    "app_session[{i}]: package must be a non-empty token"
                ));
            }
        }
        for (i, w) in self.wifi_sessions.iter().enumerate() {
            if w.start >= w.end {
                return err(format!("wifi_session[{i}]: start must precede end"));
            }
            if w.end > self.capture_time {
                return err(format!("wifi_session[{i}]: ends after capture_time"));
            }
            if !plain_token(&w.ssid) || w.ssid.contains([',', '}', ']']) {
                return err(format!("wifi_session[{i}]: ssid must be a non-empty token"));
            }
            if !canonical_ipv4(&w.assigned_ip) {
                return err(format!(
                    "wifi_session[{i}]: invalid IPv4 address {:?}",
                    w.assigned_ip
                ));
            }
        }
        for (i, r) in self.reboots.iter().enumerate() {
            if *r > self.capture_time {
                return err(format!("reboots[{i}]: after capture_time"));
            }
        }
        for (i, h) in self.host_side.iter().enumerate() {
            if !plain_token(&h.host) || h.host.contains(['<', '>', '&', '[', ']', ',']) {
                return err(format!("host_side[{i}]: host must be a plain token"));
            }
            if h.port == 0 {
                return err(format!("host_side[{i}]: port must be nonzero"));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// The reboot the lease log reflects: the latest one not after capture.
    pub fn last_reboot(&self) -> Option<Timestamp> {
        self.reboots
            .iter()
            .copied()
            .filter(|r| *r <= self.capture_time)
            .max()
    }

    pub fn detail_window_start(&self) -> Timestamp {
        self.capture_time.saturating_sub(DETAIL_WINDOW_SECONDS)
    }

    pub fn total_bytes(&self) -> u64 {
        self.wifi_sessions
            .iter()
            .map(|w| w.bytes_in + w.bytes_out)
            .sum()
    }
}

/// One netstats bucket as ground truth: bytes summed per (ssid, st).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TruthBucket {
    pub ssid: String,
    pub st: Timestamp,
    pub rb: u64,
    pub tb: u64,
}

fn split_proportionally(total: u64, weights: &[i64]) -> Vec<u64> {
    let sum: i64 = weights.iter().sum();
    let mut out: Vec<u64> = weights
        .iter()
        .map(|w| ((total as u128 * *w as u128) / sum as u128) as u64)
        .collect();
    let assigned: u64 = out.iter().sum();
    if let Some(last) = out.last_mut() {
        *last += total - assigned;
    }
    out
}

/// Spreads each Wi-Fi session's bytes over the aligned buckets it overlaps,
/// in proportion to overlap; rounding remainders go to the last bucket.
/// Sorted by (ssid, st).
pub fn truth_buckets(s: &Scenario, duration: BucketDuration) -> Vec<TruthBucket> {
    let d = duration.seconds();
    let mut acc: std::collections::BTreeMap<(String, Timestamp), (u64, u64)> = Default::default();
    for w in &s.wifi_sessions {
        let (start, end) = (w.start.epoch_seconds(), w.end.epoch_seconds());
        let first = start.div_euclid(d) * d;
        let mut sts = Vec::new();
        let mut weights = Vec::new();
        let mut st = first;
        while st < end {
            sts.push(st);
            weights.push(end.min(st + d) - start.max(st));
            st += d;
        }
        let ins = split_proportionally(w.bytes_in, &weights);
        let outs = split_proportionally(w.bytes_out, &weights);
        for ((st, i), o) in sts.into_iter().zip(ins).zip(outs) {
            let key = (
                w.ssid.clone(),
                Timestamp::from_epoch(st).expect("bucket start after epoch"),
            );
            let e = acc.entry(key).or_default();
            e.0 += i;
            e.1 += o;
        }
    }
    acc.into_iter()
        .map(|((ssid, st), (rb, tb))| TruthBucket { ssid, st, rb, tb })
        .collect()
}

/// Second-precision events the usage log keeps: a resume at each session
/// start and a pause at each end, if inside the trailing 24 h. Ordered by
/// time, then session, then resume before pause.
pub fn truth_events(s: &Scenario) -> Vec<UsageEvent> {
    let lo = s.detail_window_start();
    let mut out: Vec<(Timestamp, usize, u8, UsageEvent)> = Vec::new();
    for (i, a) in s.app_sessions.iter().enumerate() {
        for (rank, at, kind) in [
            (0, a.start, UsageEventType::ActivityResumed),
            (1, a.end, UsageEventType::ActivityPaused),
        ] {
            if at >= lo && at <= s.capture_time {
                out.push((
                    at,
                    i,
                    rank,
                    UsageEvent {
                        at,
                        package: a.package.clone(),
                        event_type: kind,
                    },
                ));
            }
        }
    }
    out.sort_by_key(|(at, i, rank, _)| (*at, *i, *rank));
    out.into_iter().map(|(.., e)| e).collect()
}

/// Coarse usage aggregates: one per package and window that saw the app,
/// with the last-used time truncated to the minute.
pub fn truth_aggregates(s: &Scenario) -> Vec<crate::dumpsys::UsageAggregate> {
    let packages: BTreeSet<&str> = s.app_sessions.iter().map(|a| a.package.as_str()).collect();
    let mut out = Vec::new();
    for window in [
        AggregateWindow::Week,
        AggregateWindow::Month,
        AggregateWindow::Year,
    ] {
        let since = s.capture_time.saturating_sub(window.seconds());
        for p in &packages {
            let sessions: Vec<&AppSession> = s
                .app_sessions
                .iter()
                .filter(|a| a.package == *p && a.end >= since)
                .collect();
            let Some(last) = sessions.iter().map(|a| a.end).max() else {
                continue;
            };
            out.push(crate::dumpsys::UsageAggregate {
                window,
                package: p.to_string(),
                last_used: last.truncate_to(60),
                precision: crate::dumpsys::Precision::Coarse,
                use_count: sessions.len() as u64,
            });
        }
    }
    out
}

/// DHCP acknowledgements surviving in the lease log: one per Wi-Fi session
/// start at or after the last reboot. Ordered by time, then session.
pub fn truth_leases(s: &Scenario) -> Vec<LeaseEvent> {
    let boot = s.last_reboot();
    let mut out: Vec<(Timestamp, usize, LeaseEvent)> = s
        .wifi_sessions
        .iter()
        .enumerate()
        .filter(|(_, w)| boot.is_none_or(|b| w.start >= b))
        .map(|(i, w)| {
            (
                w.start,
                i,
                LeaseEvent {
                    at: w.start,
                    interface: WIFI_INTERFACE.into(),
                    network_id: w.announce_ssid.then(|| w.ssid.clone()),
                    private_ip: w.assigned_ip.clone(),
                    event_kind: LeaseEventKind::DhcpAck,
                },
            )
        })
        .collect();
    out.sort_by_key(|(at, i, _)| (*at, *i));
    out.into_iter().map(|(.., l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_epoch(s).unwrap()
    }

    fn wifi(ssid: &str, start: i64, end: i64, bin: u64, bout: u64) -> WifiSession {
        WifiSession {
            ssid: ssid.into(),
            start: ts(start),
            end: ts(end),
            bytes_in: bin,
            bytes_out: bout,
            assigned_ip: "10.0.0.2".into(),
            announce_ssid: true,
        }
    }

    fn base() -> Scenario {
        Scenario {
            capture_time: ts(200_000),
            app_sessions: vec![],
            wifi_sessions: vec![],
            reboots: vec![],
            host_side: vec![],
        }
    }

    #[test]
    fn validation_names_the_problem() {
        let mut s = base();
        s.wifi_sessions.push(wifi("a", 10, 5, 0, 0));
        assert!(s.validate().unwrap_err().0.contains("wifi_session[0]"));
        let mut s = base();
        s.wifi_sessions.push(wifi("a", 10, 50, 0, 0));
        s.wifi_sessions[0].assigned_ip = "10.0.0.300".into();
        assert!(s.validate().unwrap_err().0.contains("IPv4"));
        let mut s = base();
        s.app_sessions.push(AppSession {
            package: "p".into(),
            start: ts(10),
            end: ts(300_000),
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn buckets_conserve_bytes() {
        let mut s = base();
        s.wifi_sessions.push(wifi("a", 3000, 7300, 1_000_001, 7));
        s.wifi_sessions.push(wifi("a", 7300, 7400, 5, 5));
        let b = truth_buckets(&s, BucketDuration::default());
        assert_eq!(
            b.iter().map(|b| b.st.epoch_seconds()).collect::<Vec<_>>(),
            vec![0, 3600, 7200]
        );
        assert_eq!(b.iter().map(|b| b.rb + b.tb).sum::<u64>(), s.total_bytes());
        // 600 s, 3600 s, 100 s of the first session
        assert_eq!(b[0].rb, 1_000_001 * 600 / 4300);
    }

    #[test]
    fn detail_window_boundary() {
        let mut s = base();
        let cap = 200_000;
        s.app_sessions.push(AppSession {
            package: "old".into(),
            start: ts(cap - 86_400 - 100),
            end: ts(cap - 86_400 - 1),
        });
        s.app_sessions.push(AppSession {
            package: "edge".into(),
            start: ts(cap - 86_400),
            end: ts(cap - 86_000),
        });
        let ev = truth_events(&s);
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.package == "edge"));
        let agg = truth_aggregates(&s);
        assert!(agg.iter().any(|a| a.package == "old"));
    }

    #[test]
    fn leases_follow_last_reboot() {
        let mut s = base();
        s.wifi_sessions.push(wifi("a", 100, 200, 0, 0));
        s.wifi_sessions.push(wifi("b", 500, 600, 0, 0));
        s.reboots = vec![300, 250_000].into_iter().map(ts).collect();
        assert_eq!(s.last_reboot(), Some(ts(300)));
        let l = truth_leases(&s);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].network_id.as_deref(), Some("b"));
    }

    #[test]
    fn toml_round_trip() {
        let mut s = base();
        s.wifi_sessions.push(wifi("a", 100, 200, 1, 2));
        s.host_side.push(HostSideEntry {
            kind: HostArtifactKind::KnownHosts,
            host: "10.0.0.2".into(),
            port: 2222,
        });
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }
}
