//! Expected findings computed straight from a scenario's ground truth.
//!
//! Nothing here parses text or calls into the correlator: buckets, events
//! and leases come from the scenario, sessions are found by pairwise
//! merging until nothing changes, and every flag is an explicit
//! quantifier over all buckets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use wildmatch::WildMatch;

use super::{
    truth_aggregates, truth_buckets, truth_events, truth_leases, HostArtifactKind, Scenario,
    TruthBucket,
};
use crate::correlate::{
    AmbiguityFlag, Confidence, DirectionBias, Finding, LeaseMatch, Pattern, RuleSet, Timeline,
};
use crate::time::{BucketDuration, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionSignature {
    pub package: Option<String>,
    /// (network, st, rb, tb), sorted.
    pub buckets: Vec<(String, i64, u64, u64)>,
    pub flags: BTreeSet<AmbiguityFlag>,
    /// (ip, basis), sorted.
    pub ips: Vec<(String, LeaseMatch)>,
    pub event_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FindingSignature {
    pub pattern: Pattern,
    pub package: Option<String>,
    pub confidence: Confidence,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub sessions: Vec<SessionSignature>,
    /// IPs that matched a host artifact, sorted and deduplicated.
    pub corroborating_ips: Vec<String>,
}

/// Normalized view of correlator output, comparable with the oracle's.
pub fn signatures(findings: &[Finding], timeline: &Timeline) -> Vec<FindingSignature> {
    let mut out: Vec<FindingSignature> = findings
        .iter()
        .map(|f| {
            let mut sessions: Vec<SessionSignature> = f
                .sessions
                .iter()
                .map(|s| {
                    let mut buckets: Vec<_> = s
                        .buckets
                        .iter()
                        .map(|&i| {
                            let r = &timeline.records[i];
                            (r.network_id.clone(), r.st.epoch_seconds(), r.rb, r.tb)
                        })
                        .collect();
                    buckets.sort();
                    let mut ips: Vec<_> = s
                        .resolved_ips
                        .iter()
                        .map(|r| (r.private_ip.clone(), r.basis))
                        .collect();
                    ips.sort();
                    SessionSignature {
                        package: s.package.clone(),
                        buckets,
                        flags: s.ambiguity_flags.clone(),
                        ips,
                        event_count: s.app_events.len(),
                    }
                })
                .collect();
            sessions.sort();
            let ips: BTreeSet<String> = f
                .host_corroboration
                .iter()
                .map(|h| h.ip().to_string())
                .collect();
            FindingSignature {
                pattern: f.pattern,
                package: f.package.clone(),
                confidence: f.confidence,
                bytes_in: f.direction_summary.bytes_in,
                bytes_out: f.direction_summary.bytes_out,
                sessions,
                corroborating_ips: ips.into_iter().collect(),
            }
        })
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Via {
    Events,
    Aggregate,
    Inherited,
    Nothing,
}

struct Group {
    members: Vec<usize>,
    events: Vec<usize>,
    package: Option<String>,
    packages: Vec<String>,
    via: Via,
}

fn inside(t: Timestamp, b: &TruthBucket, d: i64) -> bool {
    b.st.epoch_seconds() <= t.epoch_seconds() && t.epoch_seconds() < b.st.epoch_seconds() + d
}

fn linked(a: &TruthBucket, b: &TruthBucket, d: i64, event_times: &[Timestamp]) -> bool {
    let contiguous = a.ssid == b.ssid && (a.st.epoch_seconds() - b.st.epoch_seconds()).abs() <= d;
    contiguous
        || event_times
            .iter()
            .any(|&t| inside(t, a, d) && inside(t, b, d))
}

pub fn oracle_findings(
    s: &Scenario,
    rules: &RuleSet,
    duration: BucketDuration,
) -> Vec<FindingSignature> {
    let d = duration.seconds();
    let buckets = truth_buckets(s, duration);
    let events = truth_events(s);
    let aggregates = truth_aggregates(s);
    let leases = truth_leases(s);
    let boot = s.last_reboot();
    let event_times: Vec<Timestamp> = events.iter().map(|e| e.at).collect();

    let mut groups: Vec<Vec<usize>> = (0..buckets.len()).map(|i| vec![i]).collect();
    loop {
        let mut merged = false;
        'scan: for x in 0..groups.len() {
            for y in x + 1..groups.len() {
                let touch = groups[x].iter().any(|&a| {
                    groups[y]
                        .iter()
                        .any(|&b| linked(&buckets[a], &buckets[b], d, &event_times))
                });
                if touch {
                    let moved = groups.remove(y);
                    groups[x].extend(moved);
                    merged = true;
                    break 'scan;
                }
            }
        }
        if !merged {
            break;
        }
    }
    let first_key = |g: &Vec<usize>| {
        g.iter()
            .map(|&i| (buckets[i].st, buckets[i].ssid.clone()))
            .min()
            .unwrap()
    };
    groups.sort_by_key(first_key);

    let span = |g: &Vec<usize>| {
        let lo = g
            .iter()
            .map(|&i| buckets[i].st.epoch_seconds())
            .min()
            .unwrap();
        let hi = g
            .iter()
            .map(|&i| buckets[i].st.epoch_seconds() + d)
            .max()
            .unwrap();
        (lo, hi)
    };
    let ssids = |g: &Vec<usize>| {
        g.iter()
            .map(|&i| buckets[i].ssid.clone())
            .collect::<BTreeSet<_>>()
    };

    let mut info: Vec<Group> = groups
        .iter()
        .map(|g| {
            let evs: Vec<usize> = (0..events.len())
                .filter(|&e| g.iter().any(|&b| inside(events[e].at, &buckets[b], d)))
                .collect();
            let mut packages: Vec<String> = Vec::new();
            for &e in &evs {
                if !packages.contains(&events[e].package) {
                    packages.push(events[e].package.clone());
                }
            }
            Group {
                members: g.clone(),
                events: evs,
                package: packages.first().cloned(),
                via: if packages.is_empty() {
                    Via::Nothing
                } else {
                    Via::Events
                },
                packages,
            }
        })
        .collect();

    for g in info.iter_mut().filter(|g| g.via == Via::Nothing) {
        let mut best: Option<(Timestamp, usize)> = None;
        for (ai, a) in aggregates.iter().enumerate() {
            if g.members
                .iter()
                .any(|&b| inside(a.last_used, &buckets[b], d))
                && best.is_none_or(|(t, _)| a.last_used < t)
            {
                best = Some((a.last_used, ai));
            }
        }
        if let Some((_, ai)) = best {
            g.package = Some(aggregates[ai].package.clone());
            g.via = Via::Aggregate;
        }
    }
    type Anchor = (usize, (i64, i64), BTreeSet<String>, Option<String>);
    let anchors: Vec<Anchor> = info
        .iter()
        .enumerate()
        .filter(|(_, g)| matches!(g.via, Via::Events | Via::Aggregate))
        .map(|(i, g)| (i, span(&g.members), ssids(&g.members), g.package.clone()))
        .collect();
    for g in info.iter_mut().filter(|g| g.via == Via::Nothing) {
        let (lo, hi) = span(&g.members);
        let mine = ssids(&g.members);
        let mut best: Option<(i64, usize, Option<String>)> = None;
        for (i, (alo, ahi), nets, pkg) in &anchors {
            if nets.is_disjoint(&mine) {
                continue;
            }
            let gap = (lo - ahi).max(alo - hi).max(0);
            if best
                .as_ref()
                .is_none_or(|(bg, bi, _)| (gap, *i) < (*bg, *bi))
            {
                best = Some((gap, *i, pkg.clone()));
            }
        }
        if let Some((_, _, pkg)) = best {
            g.package = pkg;
            g.via = Via::Inherited;
        }
    }

    struct Expected {
        pattern: Pattern,
        package: Option<String>,
        sessions: Vec<SessionSignature>,
        bytes: (u64, u64),
        eligible_ips: Vec<String>,
        demoted: bool,
    }
    let mut expected: Vec<Expected> = Vec::new();
    for g in &info {
        let rb: u64 = g.members.iter().map(|&b| buckets[b].rb).sum();
        let tb: u64 = g.members.iter().map(|&b| buckets[b].tb).sum();
        let mine = ssids(&g.members);

        let mut flags = BTreeSet::new();
        let multi = g.members.iter().any(|&b| {
            let me = &buckets[b];
            me.rb + me.tb > 0
                && buckets
                    .iter()
                    .any(|o| o.st == me.st && o.ssid != me.ssid && o.rb + o.tb > 0)
        });
        if multi {
            flags.insert(AmbiguityFlag::MultiNetworkSameBucket);
        }
        if g.events.is_empty() && (rb + tb > 0 || g.via == Via::Aggregate) {
            flags.insert(AmbiguityFlag::UsageEvidenceExpired);
        }
        let first_st = g.members.iter().map(|&b| buckets[b].st).min().unwrap();
        if boot.is_some_and(|b| b > first_st) {
            flags.insert(AmbiguityFlag::LeaseLogRebooted);
        }

        let mut ips: BTreeSet<(String, LeaseMatch)> = BTreeSet::new();
        for l in &leases {
            match &l.network_id {
                Some(n) if mine.contains(n) => {
                    ips.insert((l.private_ip.clone(), LeaseMatch::NetworkId));
                }
                None if g.members.iter().any(|&b| inside(l.at, &buckets[b], d)) => {
                    ips.insert((l.private_ip.clone(), LeaseMatch::TimeOnly));
                }
                _ => {}
            }
        }
        let eligible: Vec<String> = ips
            .iter()
            .filter(|(_, basis)| *basis == LeaseMatch::NetworkId || !multi)
            .map(|(ip, _)| ip.clone())
            .collect();

        let candidates: Vec<String> = if g.packages.is_empty() {
            g.package.iter().cloned().collect()
        } else {
            g.packages.clone()
        };
        let mut assigned: Option<(Pattern, Option<String>)> = None;
        for rule in &rules.rules {
            let bias_ok = match rule.direction_bias {
                DirectionBias::Any => true,
                DirectionBias::InboundHeavy => rb >= tb,
                DirectionBias::OutboundHeavy => tb >= rb,
            };
            if !bias_ok || rb + tb < rule.min_bytes {
                continue;
            }
            let hit = candidates.iter().find(|p| {
                rule.package_markers
                    .iter()
                    .any(|m| WildMatch::new(m).matches(p))
            });
            if let Some(p) = hit {
                assigned = Some((rule.pattern, Some(p.clone())));
                break;
            }
        }
        if assigned.is_none() && rb + tb >= rules.unclassified_min_bytes {
            assigned = Some((Pattern::UnclassifiedTransfer, g.package.clone()));
        }
        let Some((pattern, package)) = assigned else {
            continue;
        };
        let mut bucket_sig: Vec<_> = g
            .members
            .iter()
            .map(|&b| {
                (
                    buckets[b].ssid.clone(),
                    buckets[b].st.epoch_seconds(),
                    buckets[b].rb,
                    buckets[b].tb,
                )
            })
            .collect();
        bucket_sig.sort();
        let demoted = flags.iter().any(|f| *f != AmbiguityFlag::LeaseLogRebooted);
        let sig = SessionSignature {
            package: g.package.clone(),
            buckets: bucket_sig,
            flags,
            ips: ips.into_iter().collect(),
            event_count: g.events.len(),
        };
        let slot = expected
            .iter_mut()
            .find(|e| package.is_some() && e.pattern == pattern && e.package == package);
        match slot {
            Some(e) => {
                e.sessions.push(sig);
                e.bytes.0 += rb;
                e.bytes.1 += tb;
                e.eligible_ips.extend(eligible);
                e.demoted |= demoted;
            }
            None => expected.push(Expected {
                pattern,
                package,
                sessions: vec![sig],
                bytes: (rb, tb),
                eligible_ips: eligible,
                demoted,
            }),
        }
    }

    let hosts: Vec<&str> = s
        .host_side
        .iter()
        .filter(|h| {
            matches!(
                h.kind,
                HostArtifactKind::Recentservers | HostArtifactKind::KnownHosts
            )
        })
        .map(|h| h.host.as_str())
        .collect();
    let mut out: Vec<FindingSignature> = expected
        .into_iter()
        .map(|mut e| {
            let matched: BTreeSet<String> = e
                .eligible_ips
                .iter()
                .filter(|ip| hosts.contains(&ip.as_str()))
                .cloned()
                .collect();
            let confidence = if !matched.is_empty() {
                Confidence::Corroborated
            } else if !e.demoted {
                Confidence::Consistent
            } else {
                Confidence::Ambiguous
            };
            e.sessions.sort();
            FindingSignature {
                pattern: e.pattern,
                package: e.package,
                confidence,
                bytes_in: e.bytes.0,
                bytes_out: e.bytes.1,
                sessions: e.sessions,
                corroborating_ips: matched.into_iter().collect(),
            }
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{AppSession, WifiSession};

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_epoch(s).unwrap()
    }

    #[test]
    fn no_traffic_no_findings() {
        let s = Scenario {
            capture_time: ts(100_000),
            app_sessions: vec![AppSession {
                package: "com.corproxy.files".into(),
                start: ts(90_000),
                end: ts(91_000),
            }],
            wifi_sessions: vec![],
            reboots: vec![],
            host_side: vec![],
        };
        assert!(oracle_findings(&s, &RuleSet::default(), BucketDuration::default()).is_empty());
    }

    #[test]
    fn same_st_two_networks_one_event() {
        let wifi = |ssid: &str, start, end, ip: &str| WifiSession {
            ssid: ssid.into(),
            start: ts(start),
            end: ts(end),
            bytes_in: 20_000_000,
            bytes_out: 0,
            assigned_ip: ip.into(),
            announce_ssid: false,
        };
        let s = Scenario {
            capture_time: ts(100_000),
            app_sessions: vec![AppSession {
                package: "com.corproxy.files".into(),
                start: ts(36_000 + 1_500),
                end: ts(36_000 + 1_700),
            }],
            wifi_sessions: vec![
                wifi("home", 36_000 + 100, 36_000 + 1_000, "10.0.0.5"),
                wifi("cafe", 36_000 + 2_000, 36_000 + 3_000, "10.9.0.5"),
            ],
            reboots: vec![],
            host_side: vec![],
        };
        let f = oracle_findings(&s, &RuleSet::default(), BucketDuration::default());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].sessions.len(), 1);
        assert!(f[0].sessions[0]
            .flags
            .contains(&AmbiguityFlag::MultiNetworkSameBucket));
        assert_eq!(f[0].confidence, Confidence::Ambiguous);
    }
}
