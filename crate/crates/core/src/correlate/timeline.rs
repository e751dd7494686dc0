use serde::{Deserialize, Serialize};

use crate::dumpsys::{
    LeaseEvent, NetUsageRecord, NetworkStackLog, UsageAggregate, UsageEvent, UsageReport,
};
use crate::evidence::SourceKind;
use crate::time::Timestamp;

/// Index into one of the [`Timeline`]'s source vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum EntryRef {
    UsageEvent(usize),
    NetBucket(usize),
    Lease(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Timestamp,
    pub source: SourceKind,
    pub reference: EntryRef,
}

/// Everything from one device bundle, merged into one ascending stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub capture_time: Timestamp,
    pub events: Vec<UsageEvent>,
    pub aggregates: Vec<UsageAggregate>,
    pub records: Vec<NetUsageRecord>,
    pub boot_marker: Option<Timestamp>,
    pub leases: Vec<LeaseEvent>,
    pub entries: Vec<TimelineEntry>,
    pub warnings: Vec<String>,
}

/// Leases that all precede the first usage event by more than this are
/// reported as probable clock skew.
pub const DEFAULT_SKEW_BOUND_SECONDS: i64 = 7 * 24 * 3600;

fn rank(r: EntryRef) -> (u8, usize) {
    match r {
        EntryRef::UsageEvent(i) => (0, i),
        EntryRef::Lease(i) => (1, i),
        EntryRef::NetBucket(i) => (2, i),
    }
}

/// Merges the three dumps. Buckets sit at their `st`; ties go usage event,
/// lease, bucket, then input order.
pub fn build_timeline(
    report: &UsageReport,
    net: &[NetUsageRecord],
    leases: &NetworkStackLog,
    skew_bound_seconds: i64,
) -> Timeline {
    let mut entries: Vec<TimelineEntry> =
        Vec::with_capacity(report.events_24h.len() + net.len() + leases.leases.len());
    entries.extend(
        report
            .events_24h
            .iter()
            .enumerate()
            .map(|(i, e)| TimelineEntry {
                at: e.at,
                source: SourceKind::Usagestats,
                reference: EntryRef::UsageEvent(i),
            }),
    );
    entries.extend(net.iter().enumerate().map(|(i, r)| TimelineEntry {
        at: r.st,
        source: SourceKind::Netstats,
        reference: EntryRef::NetBucket(i),
    }));
    entries.extend(
        leases
            .leases
            .iter()
            .enumerate()
            .map(|(i, l)| TimelineEntry {
                at: l.at,
                source: SourceKind::NetworkStack,
                reference: EntryRef::Lease(i),
            }),
    );
    entries.sort_by_key(|e| (e.at, rank(e.reference)));

    let mut warnings = Vec::new();
    let first_usage = report.events_24h.iter().map(|e| e.at).min();
    let last_lease = leases.leases.iter().map(|l| l.at).max();
    if let (Some(u), Some(l)) = (first_usage, last_lease) {
        if u.epoch_seconds() - l.epoch_seconds() > skew_bound_seconds {
            warnings.push(format!(
                "clock skew suspected: every lease precedes the first usage event by more than {skew_bound_seconds} s"
            ));
        }
    }

    Timeline {
        capture_time: report.capture_time,
        events: report.events_24h.clone(),
        aggregates: report.aggregates.clone(),
        records: net.to_vec(),
        boot_marker: leases.boot_epoch_marker,
        leases: leases.leases.clone(),
        entries,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dumpsys::{LeaseEventKind, UsageEventType};

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_epoch(s).unwrap()
    }

    #[test]
    fn empty_inputs_give_empty_timeline() {
        let t = build_timeline(
            &UsageReport::empty(ts(100)),
            &[],
            &NetworkStackLog::default(),
            DEFAULT_SKEW_BOUND_SECONDS,
        );
        assert!(t.entries.is_empty());
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn interleaves_and_tags_sources() {
        let mut report = UsageReport::empty(ts(10_000));
        report.events_24h.push(UsageEvent {
            at: ts(3_700),
            package: "p".into(),
            event_type: UsageEventType::ActivityResumed,
        });
        let net = vec![
            NetUsageRecord {
                network_id: "a".into(),
                st: ts(7_200),
                rb: 1,
                rp: 1,
                tb: 1,
                tp: 1,
            },
            NetUsageRecord {
                network_id: "a".into(),
                st: ts(3_600),
                rb: 1,
                rp: 1,
                tb: 1,
                tp: 1,
            },
        ];
        let leases = NetworkStackLog {
            boot_epoch_marker: None,
            leases: vec![LeaseEvent {
                at: ts(3_600),
                interface: "wlan0".into(),
                network_id: Some("a".into()),
                private_ip: "10.0.0.2".into(),
                event_kind: LeaseEventKind::DhcpAck,
            }],
        };
        let t = build_timeline(&report, &net, &leases, DEFAULT_SKEW_BOUND_SECONDS);
        let order: Vec<_> = t.entries.iter().map(|e| e.reference).collect();
        assert_eq!(
            order,
            vec![
                EntryRef::Lease(0),
                EntryRef::NetBucket(1),
                EntryRef::UsageEvent(0),
                EntryRef::NetBucket(0)
            ]
        );
        assert_eq!(t.entries[0].source, SourceKind::NetworkStack);
    }

    #[test]
    fn skew_warning() {
        let mut report = UsageReport::empty(ts(2_000_000));
        report.events_24h.push(UsageEvent {
            at: ts(1_900_000),
            package: "p".into(),
            event_type: UsageEventType::ActivityResumed,
        });
        let leases = NetworkStackLog {
            boot_epoch_marker: None,
            leases: vec![LeaseEvent {
                at: ts(10),
                interface: "wlan0".into(),
                network_id: None,
                private_ip: "10.0.0.2".into(),
                event_kind: LeaseEventKind::DhcpAck,
            }],
        };
        let t = build_timeline(&report, &[], &leases, 3600);
        assert_eq!(t.warnings.len(), 1);
    }
}
