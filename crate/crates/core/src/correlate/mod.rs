//! Merges usage, traffic, lease and host evidence into graded findings.

pub mod rules;
pub mod sessions;
pub mod timeline;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::host::{FtpServerEntry, KnownHostEntry};

pub use rules::{DirectionBias, PatternRule, RuleSet, DEFAULT_UNCLASSIFIED_MIN_BYTES};
pub use sessions::{
    grade_volume, match_sessions, AmbiguityFlag, AppNetworkSession, Attribution, DirectionSummary,
    LeaseMatch, ResolvedIp,
};
pub use timeline::{build_timeline, EntryRef, Timeline, TimelineEntry, DEFAULT_SKEW_BOUND_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    FtpServerExfil,
    SftpServerExfil,
    HiddenCameraControl,
    UnclassifiedTransfer,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::FtpServerExfil => "ftp_server_exfil",
            Pattern::SftpServerExfil => "sftp_server_exfil",
            Pattern::HiddenCameraControl => "hidden_camera_control",
            Pattern::UnclassifiedTransfer => "unclassified_transfer",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Corroborated,
    Consistent,
    Ambiguous,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Corroborated => "corroborated",
            Confidence::Consistent => "consistent",
            Confidence::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A host artifact whose host equals one of the finding's resolved IPs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "snake_case")]
pub enum HostMatch {
    Ftp {
        index: usize,
        entry: FtpServerEntry,
        ip: String,
    },
    KnownHost {
        index: usize,
        entry: KnownHostEntry,
        ip: String,
    },
}

impl HostMatch {
    pub fn ip(&self) -> &str {
        match self {
            HostMatch::Ftp { ip, .. } | HostMatch::KnownHost { ip, .. } => ip,
        }
    }
}

/// An exfiltration hypothesis: traffic volumes and endpoints only, never
/// payload content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub pattern: Pattern,
    pub package: Option<String>,
    /// Sessions sharing pattern and package, earliest first.
    pub sessions: Vec<AppNetworkSession>,
    pub host_corroboration: Vec<HostMatch>,
    pub direction_summary: DirectionSummary,
    pub confidence: Confidence,
}

impl Finding {
    pub fn has_flag(&self, flag: AmbiguityFlag) -> bool {
        self.sessions.iter().any(|s| s.has_flag(flag))
    }

    pub fn flags(&self) -> std::collections::BTreeSet<AmbiguityFlag> {
        self.sessions
            .iter()
            .flat_map(|s| s.ambiguity_flags.iter().copied())
            .collect()
    }
}

/// Tunables for one correlation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationConfig {
    pub bucket: crate::time::BucketDuration,
    pub rules: RuleSet,
    pub skew_bound_seconds: i64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            bucket: Default::default(),
            rules: RuleSet::default(),
            skew_bound_seconds: DEFAULT_SKEW_BOUND_SECONDS,
        }
    }
}

/// Assigns patterns, groups sessions by (pattern, package) and grades them.
pub fn corroborate(
    sessions: &[AppNetworkSession],
    ftp_entries: &[FtpServerEntry],
    known_hosts: &[KnownHostEntry],
    rules: &RuleSet,
) -> Vec<Finding> {
    let mut findings: Vec<Finding> = Vec::new();
    for session in sessions {
        let Some((pattern, package)) = rules.classify(session) else {
            continue;
        };
        let existing = package.as_ref().and_then(|p| {
            findings
                .iter_mut()
                .find(|f| f.pattern == pattern && f.package.as_ref() == Some(p))
        });
        match existing {
            Some(f) => f.sessions.push(session.clone()),
            None => findings.push(Finding {
                pattern,
                package,
                sessions: vec![session.clone()],
                host_corroboration: Vec::new(),
                direction_summary: DirectionSummary::default(),
                confidence: Confidence::Ambiguous,
            }),
        }
    }
    for f in &mut findings {
        f.direction_summary = f
            .sessions
            .iter()
            .fold(DirectionSummary::default(), |acc, s| acc + s.volume);
        let mut ips: Vec<&str> = Vec::new();
        for r in f.sessions.iter().flat_map(|s| s.corroborating_ips()) {
            if !ips.contains(&r.private_ip.as_str()) {
                ips.push(&r.private_ip);
            }
        }
        let mut matches = Vec::new();
        for ip in &ips {
            for (index, e) in ftp_entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.host == *ip)
            {
                matches.push(HostMatch::Ftp {
                    index,
                    entry: e.clone(),
                    ip: ip.to_string(),
                });
            }
            for (index, e) in known_hosts
                .iter()
                .enumerate()
                .filter(|(_, e)| e.matches_ip(ip))
            {
                matches.push(HostMatch::KnownHost {
                    index,
                    entry: e.clone(),
                    ip: ip.to_string(),
                });
            }
        }
        f.host_corroboration = matches;
        let demoted = f
            .sessions
            .iter()
            .any(|s| s.ambiguity_flags.iter().any(|fl| fl.demotes()));
        f.confidence = if !f.host_corroboration.is_empty() {
            Confidence::Corroborated
        } else if !demoted {
            Confidence::Consistent
        } else {
            Confidence::Ambiguous
        };
    }
    findings
}

/// Timeline, sessions and findings from already-parsed inputs.
pub fn correlate(
    report: &crate::dumpsys::UsageReport,
    net: &[crate::dumpsys::NetUsageRecord],
    leases: &crate::dumpsys::NetworkStackLog,
    ftp_entries: &[FtpServerEntry],
    known_hosts: &[KnownHostEntry],
    config: &CorrelationConfig,
) -> (Timeline, Vec<AppNetworkSession>, Vec<Finding>) {
    let timeline = build_timeline(report, net, leases, config.skew_bound_seconds);
    let sessions = match_sessions(&timeline, config.bucket);
    let findings = corroborate(&sessions, ftp_entries, known_hosts, &config.rules);
    (timeline, sessions, findings)
}
