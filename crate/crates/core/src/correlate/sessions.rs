//! Grouping traffic buckets into app/network sessions.
//!
//! Buckets are linked when they belong to the same network and are
//! contiguous (`next.st <= prev.st + duration`), and when a single usage
//! event falls inside each of them. Every connected component is one
//! session, so sessions partition the buckets and no byte is counted
//! twice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::timeline::Timeline;
use crate::time::{BucketDuration, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityFlag {
    MultiNetworkSameBucket,
    UsageEvidenceExpired,
    LeaseLogRebooted,
}

impl AmbiguityFlag {
    pub const ALL: [AmbiguityFlag; 3] = [
        AmbiguityFlag::MultiNetworkSameBucket,
        AmbiguityFlag::UsageEvidenceExpired,
        AmbiguityFlag::LeaseLogRebooted,
    ];

    /// Whether the flag weakens attribution (and so blocks `consistent`).
    /// A rebooted lease log only removes IP evidence.
    pub fn demotes(self) -> bool {
        !matches!(self, AmbiguityFlag::LeaseLogRebooted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityFlag::MultiNetworkSameBucket => "multi_network_same_bucket",
            AmbiguityFlag::UsageEvidenceExpired => "usage_evidence_expired",
            AmbiguityFlag::LeaseLogRebooted => "lease_log_rebooted",
        }
    }
}

impl fmt::Display for AmbiguityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a session got its package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum Attribution {
    /// Second-precision usage events fall inside the session's buckets.
    UsageEvents,
    /// A coarse aggregate last-used time falls inside a bucket.
    Aggregate {
        aggregate: usize,
    },
    /// Borrowed from the nearest attributed session on the same network.
    SameNetwork {
        session: usize,
    },
    Unattributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaseMatch {
    NetworkId,
    /// Lease had no SSID; matched because its time falls in a bucket.
    TimeOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedIp {
    pub private_ip: String,
    pub lease: usize,
    pub basis: LeaseMatch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl DirectionSummary {
    pub fn total(&self) -> u64 {
        self.bytes_in + self.bytes_out
    }
}

impl std::ops::Add for DirectionSummary {
    type Output = DirectionSummary;

    fn add(self, other: DirectionSummary) -> DirectionSummary {
        DirectionSummary {
            bytes_in: self.bytes_in + other.bytes_in,
            bytes_out: self.bytes_out + other.bytes_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppNetworkSession {
    /// Earliest package seen, or the attributed one for event-less sessions.
    pub package: Option<String>,
    /// Every distinct package with events in the session, in event order.
    pub packages: Vec<String>,
    pub attribution: Attribution,
    /// Indices into [`Timeline::events`], ascending by time.
    pub app_events: Vec<usize>,
    /// Indices into [`Timeline::records`], by (st, network_id, index).
    pub buckets: Vec<usize>,
    pub network_ids: Vec<String>,
    pub first_bucket_start: Timestamp,
    pub last_bucket_end: i64,
    pub volume: DirectionSummary,
    pub resolved_ips: Vec<ResolvedIp>,
    pub ambiguity_flags: BTreeSet<AmbiguityFlag>,
}

impl AppNetworkSession {
    pub fn has_flag(&self, flag: AmbiguityFlag) -> bool {
        self.ambiguity_flags.contains(&flag)
    }

    /// Packages a pattern rule may match against, earliest first.
    pub fn candidate_packages(&self) -> Vec<&str> {
        if self.packages.is_empty() {
            self.package.iter().map(String::as_str).collect()
        } else {
            self.packages.iter().map(String::as_str).collect()
        }
    }

    /// Resolved IPs allowed to support a corroborated grading. Time-only
    /// matches are excluded when several networks share a bucket.
    pub fn corroborating_ips(&self) -> impl Iterator<Item = &ResolvedIp> {
        let multi = self.has_flag(AmbiguityFlag::MultiNetworkSameBucket);
        self.resolved_ips
            .iter()
            .filter(move |r| r.basis == LeaseMatch::NetworkId || !multi)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index as root keeps components deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Sum of received and transmitted bytes over the given records.
pub fn grade_volume(session: &AppNetworkSession, timeline: &Timeline) -> DirectionSummary {
    session.buckets.iter().map(|&i| &timeline.records[i]).fold(
        DirectionSummary::default(),
        |acc, r| {
            acc + DirectionSummary {
                bytes_in: r.rb,
                bytes_out: r.tb,
            }
        },
    )
}

fn span_distance(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.1).max(b.0 - a.1).max(0)
}

pub fn match_sessions(timeline: &Timeline, duration: BucketDuration) -> Vec<AppNetworkSession> {
    let d = duration.seconds();
    let records = &timeline.records;
    let n = records.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sets = DisjointSet::new(n);

    // Same-network contiguity.
    let mut by_network: Vec<usize> = (0..n).collect();
    by_network.sort_by(|&a, &b| {
        (records[a].network_id.as_str(), records[a].st, a).cmp(&(
            records[b].network_id.as_str(),
            records[b].st,
            b,
        ))
    });
    for w in by_network.windows(2) {
        let (p, q) = (&records[w[0]], &records[w[1]]);
        if p.network_id == q.network_id && q.st.epoch_seconds() <= p.st.epoch_seconds() + d {
            sets.union(w[0], w[1]);
        }
    }

    // Records by start time, for event lookups.
    let mut by_st: Vec<usize> = (0..n).collect();
    by_st.sort_by_key(|&i| (records[i].st, i));
    let hits_of = |at: Timestamp| -> Vec<usize> {
        let t = at.epoch_seconds();
        // st in (t - d, t]
        let lo = by_st.partition_point(|&i| records[i].st.epoch_seconds() <= t - d);
        let hi = by_st.partition_point(|&i| records[i].st.epoch_seconds() <= t);
        by_st[lo..hi].to_vec()
    };
    let event_hits: Vec<Vec<usize>> = timeline.events.iter().map(|e| hits_of(e.at)).collect();
    for hits in &event_hits {
        for w in hits.windows(2) {
            sets.union(w[0], w[1]);
        }
    }

    // Components, ordered by their earliest (st, network_id, index).
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = sets.find(i);
        components.entry(root).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = components.into_values().collect();
    let bucket_key = |i: &usize| (records[*i].st, records[*i].network_id.clone(), *i);
    for g in &mut groups {
        g.sort_by_key(bucket_key);
    }
    groups.sort_by_key(|g| bucket_key(&g[0]));

    let mut component_of = vec![0usize; n];
    for (gi, g) in groups.iter().enumerate() {
        for &i in g {
            component_of[i] = gi;
        }
    }
    let mut events_of: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (ei, hits) in event_hits.iter().enumerate() {
        if let Some(&first) = hits.first() {
            events_of[component_of[first]].push(ei);
        }
    }

    // (network_id, st) -> networks with traffic at that st
    let mut active_at: BTreeMap<Timestamp, BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.total_bytes() > 0) {
        active_at
            .entry(r.st)
            .or_default()
            .insert(r.network_id.as_str());
    }

    let mut sessions: Vec<AppNetworkSession> = groups
        .iter()
        .zip(events_of)
        .map(|(buckets, app_events)| {
            let mut packages: Vec<String> = Vec::new();
            for &ei in &app_events {
                let p = &timeline.events[ei].package;
                if !packages.contains(p) {
                    packages.push(p.clone());
                }
            }
            let mut network_ids: Vec<String> = buckets
                .iter()
                .map(|&i| records[i].network_id.clone())
                .collect();
            network_ids.sort();
            network_ids.dedup();
            let first_bucket_start = records[buckets[0]].st;
            let last_bucket_end = buckets
                .iter()
                .map(|&i| records[i].st.epoch_seconds() + d)
                .max()
                .unwrap();
            let volume = buckets.iter().fold(DirectionSummary::default(), |acc, &i| {
                acc + DirectionSummary {
                    bytes_in: records[i].rb,
                    bytes_out: records[i].tb,
                }
            });
            let mut flags = BTreeSet::new();
            let multi = buckets.iter().map(|&i| &records[i]).any(|r| {
                r.total_bytes() > 0
                    && active_at
                        .get(&r.st)
                        .is_some_and(|nets| nets.iter().any(|n| *n != r.network_id))
            });
            if multi {
                flags.insert(AmbiguityFlag::MultiNetworkSameBucket);
            }
            if timeline.boot_marker.is_some_and(|b| b > first_bucket_start) {
                flags.insert(AmbiguityFlag::LeaseLogRebooted);
            }
            AppNetworkSession {
                package: packages.first().cloned(),
                attribution: if packages.is_empty() {
                    Attribution::Unattributed
                } else {
                    Attribution::UsageEvents
                },
                packages,
                app_events,
                buckets: buckets.clone(),
                network_ids,
                first_bucket_start,
                last_bucket_end,
                volume,
                resolved_ips: Vec::new(),
                ambiguity_flags: flags,
            }
        })
        .collect();

    // Event-less sessions: coarse aggregate times first.
    for s in sessions.iter_mut().filter(|s| s.app_events.is_empty()) {
        let hit = timeline
            .aggregates
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                s.buckets.iter().any(|&i| {
                    let st = records[i].st.epoch_seconds();
                    let t = a.last_used.epoch_seconds();
                    st <= t && t < st + d
                })
            })
            .min_by_key(|(ai, a)| (a.last_used, *ai));
        if let Some((ai, a)) = hit {
            s.package = Some(a.package.clone());
            s.attribution = Attribution::Aggregate { aggregate: ai };
        }
    }

    // Then borrow from the nearest attributed session on a shared network.
    // (session, span, networks, package)
    type Anchor = (usize, (i64, i64), Vec<String>, String);
    let anchors: Vec<Anchor> = sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| !matches!(s.attribution, Attribution::Unattributed))
        .map(|(i, s)| {
            (
                i,
                (s.first_bucket_start.epoch_seconds(), s.last_bucket_end),
                s.network_ids.clone(),
                s.package
                    .clone()
                    .expect("attributed sessions have a package"),
            )
        })
        .collect();
    for s in sessions
        .iter_mut()
        .filter(|s| s.attribution == Attribution::Unattributed)
    {
        let span = (s.first_bucket_start.epoch_seconds(), s.last_bucket_end);
        let nearest = anchors
            .iter()
            .filter(|(_, _, nets, _)| nets.iter().any(|n| s.network_ids.contains(n)))
            .min_by_key(|(i, a_span, _, _)| (span_distance(span, *a_span), *i));
        if let Some((i, _, _, pkg)) = nearest {
            s.package = Some(pkg.clone());
            s.attribution = Attribution::SameNetwork { session: *i };
        }
    }

    for s in &mut sessions {
        let aggregate_backed = matches!(s.attribution, Attribution::Aggregate { .. });
        if s.app_events.is_empty() && (s.volume.total() > 0 || aggregate_backed) {
            s.ambiguity_flags
                .insert(AmbiguityFlag::UsageEvidenceExpired);
        }
        s.resolved_ips = resolve_ips(s, timeline, d);
    }
    sessions
}

fn resolve_ips(session: &AppNetworkSession, timeline: &Timeline, d: i64) -> Vec<ResolvedIp> {
    let mut out: Vec<ResolvedIp> = Vec::new();
    for (li, lease) in timeline.leases.iter().enumerate() {
        let basis = match &lease.network_id {
            Some(net) => session
                .network_ids
                .contains(net)
                .then_some(LeaseMatch::NetworkId),
            None => session
                .buckets
                .iter()
                .any(|&i| {
                    let st = timeline.records[i].st.epoch_seconds();
                    st <= lease.at.epoch_seconds() && lease.at.epoch_seconds() < st + d
                })
                .then_some(LeaseMatch::TimeOnly),
        };
        if let Some(basis) = basis {
            if !out
                .iter()
                .any(|r| r.private_ip == lease.private_ip && r.basis == basis)
            {
                out.push(ResolvedIp {
                    private_ip: lease.private_ip.clone(),
                    lease: li,
                    basis,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::timeline::{build_timeline, DEFAULT_SKEW_BOUND_SECONDS};
    use crate::dumpsys::{
        AggregateWindow, LeaseEvent, LeaseEventKind, NetUsageRecord, NetworkStackLog, Precision,
        UsageAggregate, UsageEvent, UsageEventType, UsageReport,
    };

    const HOUR: i64 = 3600;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_epoch(s).unwrap()
    }

    fn rec(net: &str, st: i64, rb: u64, tb: u64) -> NetUsageRecord {
        NetUsageRecord {
            network_id: net.into(),
            st: ts(st),
            rb,
            rp: rb / 1500,
            tb,
            tp: tb / 1500,
        }
    }

    fn ev(at: i64, pkg: &str) -> UsageEvent {
        UsageEvent {
            at: ts(at),
            package: pkg.into(),
            event_type: UsageEventType::ActivityResumed,
        }
    }

    fn lease(at: i64, net: Option<&str>, ip: &str) -> LeaseEvent {
        LeaseEvent {
            at: ts(at),
            interface: "wlan0".into(),
            network_id: net.map(str::to_string),
            private_ip: ip.into(),
            event_kind: LeaseEventKind::DhcpAck,
        }
    }

    fn run(
        capture: i64,
        events: Vec<UsageEvent>,
        aggregates: Vec<UsageAggregate>,
        net: Vec<NetUsageRecord>,
        boot: Option<i64>,
        leases: Vec<LeaseEvent>,
    ) -> (Timeline, Vec<AppNetworkSession>) {
        let report = UsageReport {
            capture_time: ts(capture),
            events_24h: events,
            aggregates,
        };
        let log = NetworkStackLog {
            boot_epoch_marker: boot.map(ts),
            leases,
        };
        let t = build_timeline(&report, &net, &log, DEFAULT_SKEW_BOUND_SECONDS);
        let s = match_sessions(&t, BucketDuration::default());
        (t, s)
    }

    #[test]
    fn sftp_event_bucket_and_lease() {
        let st = 1_683_806_400; // 21:00 KST
        let (_, s) = run(
            1_683_809_100,
            vec![ev(1_683_807_006, "net.xnano.android.sshserver")],
            vec![],
            vec![rec("outgoingowl", st, 18_000_000, 400_000)],
            None,
            vec![lease(1_683_806_740, Some("outgoingowl"), "192.162.35.52")],
        );
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].package.as_deref(), Some("net.xnano.android.sshserver"));
        assert_eq!(s[0].resolved_ips[0].private_ip, "192.162.35.52");
        assert_eq!(s[0].resolved_ips[0].basis, LeaseMatch::NetworkId);
        assert!(s[0].ambiguity_flags.is_empty());
    }

    #[test]
    fn old_traffic_without_event_is_expired_and_inherits_package() {
        let may8 = 1_683_547_200;
        let may9 = 1_683_604_800;
        let (_, s) = run(
            1_683_622_800,
            vec![ev(1_683_608_340, "com.view.ppcs")],
            vec![],
            vec![
                rec("F818026FNMEN", may8, 1_000_000, 125_000_000),
                rec("F818026FNMEN", may9, 500_000, 31_000_000),
            ],
            None,
            vec![],
        );
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].first_bucket_start, ts(may8));
        assert!(s[0].app_events.is_empty());
        assert!(s[0].has_flag(AmbiguityFlag::UsageEvidenceExpired));
        assert_eq!(s[0].package.as_deref(), Some("com.view.ppcs"));
        assert_eq!(s[0].attribution, Attribution::SameNetwork { session: 1 });
        assert!(s[1].ambiguity_flags.is_empty());
    }

    #[test]
    fn aggregate_last_used_attributes_event_less_bucket() {
        let agg = UsageAggregate {
            window: AggregateWindow::Week,
            package: "com.view.ppcs".into(),
            last_used: ts(1_683_608_340),
            precision: Precision::Coarse,
            use_count: 2,
        };
        let (_, s) = run(
            1_683_809_100,
            vec![],
            vec![agg],
            vec![rec("F818026FNMEN", 1_683_604_800, 0, 31_000_000)],
            None,
            vec![],
        );
        assert_eq!(s[0].attribution, Attribution::Aggregate { aggregate: 0 });
        assert!(s[0].has_flag(AmbiguityFlag::UsageEvidenceExpired));
    }

    #[test]
    fn two_networks_same_st_one_event_is_one_flagged_session() {
        let st = 10 * HOUR;
        let (_, s) = run(
            20 * HOUR,
            vec![ev(st + 600, "com.corproxy.files")],
            vec![],
            vec![rec("home", st, 5_000, 10), rec("cafe", st, 7_000, 10)],
            None,
            vec![lease(st + 60, None, "10.0.0.7")],
        );
        assert_eq!(s.len(), 1);
        assert!(s[0].has_flag(AmbiguityFlag::MultiNetworkSameBucket));
        assert_eq!(
            s[0].network_ids,
            vec!["cafe".to_string(), "home".to_string()]
        );
        assert_eq!(s[0].resolved_ips[0].basis, LeaseMatch::TimeOnly);
        assert_eq!(s[0].corroborating_ips().count(), 0);
    }

    #[test]
    fn contiguity_and_gaps() {
        let (_, s) = run(
            100 * HOUR,
            vec![],
            vec![],
            vec![
                rec("a", 0, 1, 0),
                rec("a", HOUR, 1, 0),
                rec("a", 3 * HOUR, 1, 0),
                rec("b", HOUR, 0, 0),
            ],
            None,
            vec![],
        );
        let spans: Vec<_> = s
            .iter()
            .map(|s| (s.network_ids.clone(), s.buckets.len()))
            .collect();
        assert_eq!(
            spans,
            vec![
                (vec!["a".to_string()], 2),
                (vec!["b".to_string()], 1),
                (vec!["a".to_string()], 1),
            ]
        );
        // zero-traffic b is neither multi-network nor expired
        assert!(s[1].ambiguity_flags.is_empty());
    }

    #[test]
    fn reboot_marker_flags_older_sessions() {
        let (_, s) = run(
            100 * HOUR,
            vec![ev(HOUR + 5, "p"), ev(50 * HOUR + 5, "p")],
            vec![],
            vec![rec("a", HOUR, 1, 1), rec("a", 50 * HOUR, 1, 1)],
            Some(40 * HOUR),
            vec![],
        );
        assert!(s[0].has_flag(AmbiguityFlag::LeaseLogRebooted));
        assert!(!s[1].has_flag(AmbiguityFlag::LeaseLogRebooted));
    }

    #[test]
    fn time_only_lease_matches_containing_bucket_only() {
        let (_, s) = run(
            100 * HOUR,
            vec![],
            vec![],
            vec![rec("a", 0, 1, 1), rec("b", 5 * HOUR, 1, 1)],
            None,
            vec![
                lease(5 * HOUR + 10, None, "10.1.1.1"),
                lease(10, Some("b"), "10.2.2.2"),
            ],
        );
        assert_eq!(s[0].resolved_ips.len(), 0);
        let ips: Vec<_> = s[1]
            .resolved_ips
            .iter()
            .map(|r| (r.private_ip.as_str(), r.basis))
            .collect();
        assert_eq!(
            ips,
            vec![
                ("10.1.1.1", LeaseMatch::TimeOnly),
                ("10.2.2.2", LeaseMatch::NetworkId)
            ]
        );
    }

    #[test]
    fn grade_volume_sums_buckets() {
        let (t, s) = run(
            100 * HOUR,
            vec![],
            vec![],
            vec![rec("a", 0, 3, 4), rec("a", HOUR, 5, 6)],
            None,
            vec![],
        );
        assert_eq!(
            grade_volume(&s[0], &t),
            DirectionSummary {
                bytes_in: 8,
                bytes_out: 10
            }
        );
        let (t0, s0) = run(
            100 * HOUR,
            vec![],
            vec![],
            vec![rec("a", 0, 0, 0)],
            None,
            vec![],
        );
        assert_eq!(grade_volume(&s0[0], &t0), DirectionSummary::default());
    }
}
