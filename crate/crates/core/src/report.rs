//! One document model rendered as markdown for people and JSON for tools.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::analysis::BundleAnalysis;
use crate::correlate::{
    AmbiguityFlag, Attribution, EntryRef, Finding, HostMatch, LeaseMatch, Timeline,
};
use crate::evidence::{EvidenceBundle, EvidenceItem, SourceKind};
use crate::host::{FtpSourceFile, HostArtifacts};
use crate::time::{BucketDuration, DisplayZone, Timestamp};

pub const SCOPE_NOTE: &str =
    "Findings describe traffic volumes and endpoints only. Transferred content cannot be recovered from these sources.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Citation {
    pub label: String,
    pub source_kind: SourceKind,
    pub digest: String,
    /// Bundle manifest digest, or "host" for PC-side artifacts.
    pub origin: String,
}

impl Citation {
    fn of(item: &EvidenceItem, origin: &str) -> Self {
        Citation {
            label: item.label.clone(),
            source_kind: item.source_kind,
            digest: item.raw_bytes_digest.clone(),
            origin: origin.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionBlock {
    pub networks: Vec<String>,
    pub first_bucket: String,
    pub last_bucket_end: String,
    pub app_start: Option<String>,
    pub attribution: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub resolved_ips: Vec<String>,
    pub ambiguity_flags: Vec<AmbiguityFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FindingBlock {
    pub pattern: String,
    pub package: Option<String>,
    pub confidence: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub sessions: Vec<SessionBlock>,
    pub host_corroboration: Vec<String>,
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimelineLine {
    pub at: String,
    pub source: SourceKind,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleSection {
    pub label: String,
    pub bundle_ref: String,
    pub capture_time: String,
    pub device: Option<crate::evidence::DeviceProfile>,
    pub warnings: Vec<String>,
    pub timeline: Vec<TimelineLine>,
    pub findings: Vec<FindingBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LimitationNote {
    pub flag: AmbiguityFlag,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportDocument {
    pub display_zone: String,
    pub bundles: Vec<BundleSection>,
    pub limitations_appendix: Vec<LimitationNote>,
    pub scope_note: String,
}

pub fn limitation_note(flag: AmbiguityFlag) -> &'static str {
    match flag {
        AmbiguityFlag::UsageEvidenceExpired => {
            "Usage events keep second precision for 24 hours only. Older activity survives as coarse last-used \
             aggregates, so package attribution for sessions without events is inferred, not observed."
        }
        AmbiguityFlag::MultiNetworkSameBucket => {
            "Traffic is accounted in hourly buckets. When several networks carry traffic in the same bucket, \
             time alone cannot tell which network an app used."
        }
        AmbiguityFlag::LeaseLogRebooted => {
            "The network_stack log restarts at boot. Leases from before the boot marker are gone, so private \
             IPs for earlier sessions cannot be resolved."
        }
    }
}

fn render_entry(t: &Timeline, r: EntryRef, zone: DisplayZone, d: BucketDuration) -> String {
    match r {
        EntryRef::UsageEvent(i) => {
            let e = &t.events[i];
            format!("{} {}", e.event_type, e.package)
        }
        EntryRef::NetBucket(i) => {
            let b = &t.records[i];
            format!(
                "bucket {} until {} on {}: rb={} tb={}",
                zone.render(b.st),
                zone.render(b.st.add_seconds(d.seconds())),
                b.network_id,
                b.rb,
                b.tb
            )
        }
        EntryRef::Lease(i) => {
            let l = &t.leases[i];
            match &l.network_id {
                Some(n) => format!(
                    "{} {} on {} ({})",
                    l.event_kind.as_str(),
                    l.private_ip,
                    n,
                    l.interface
                ),
                None => format!(
                    "{} {} ({})",
                    l.event_kind.as_str(),
                    l.private_ip,
                    l.interface
                ),
            }
        }
    }
}

fn describe_match(m: &HostMatch) -> String {
    match m {
        HostMatch::Ftp { entry, ip, .. } => format!(
            "{ip} matches FileZilla {} server {}:{} ({})",
            match entry.source_file {
                FtpSourceFile::RecentserversXml => "recent",
                FtpSourceFile::FilezillaXml => "saved",
            },
            entry.host,
            entry.port,
            entry.protocol
        ),
        HostMatch::KnownHost { entry, ip, .. } => {
            format!(
                "{ip} matches known_hosts entry {} ({})",
                entry.host_pattern, entry.key_type
            )
        }
    }
}

fn finding_block(
    f: &Finding,
    t: &Timeline,
    bundle: &EvidenceBundle,
    host: &HostArtifacts,
    zone: DisplayZone,
) -> FindingBlock {
    let origin = bundle.bundle_manifest_digest.as_str();
    let mut citations = Vec::new();
    let mut cite = |item: Option<&EvidenceItem>, origin: &str| {
        if let Some(i) = item {
            let c = Citation::of(i, origin);
            if !citations.contains(&c) {
                citations.push(c);
            }
        }
    };
    cite(bundle.item_of_kind(SourceKind::Netstats), origin);
    let usage_backed = f.sessions.iter().any(|s| {
        !s.app_events.is_empty() || matches!(s.attribution, Attribution::Aggregate { .. })
    });
    if usage_backed {
        cite(bundle.item_of_kind(SourceKind::Usagestats), origin);
    }
    if f.sessions.iter().any(|s| !s.resolved_ips.is_empty()) {
        cite(bundle.item_of_kind(SourceKind::NetworkStack), origin);
    }
    for m in &f.host_corroboration {
        let kind = match m {
            HostMatch::Ftp { entry, .. } => match entry.source_file {
                FtpSourceFile::RecentserversXml => SourceKind::RecentserversXml,
                FtpSourceFile::FilezillaXml => SourceKind::FilezillaXml,
            },
            HostMatch::KnownHost { .. } => SourceKind::KnownHosts,
        };
        for item in host.items_of(&[kind]) {
            cite(Some(item), "host");
        }
    }

    let sessions = f
        .sessions
        .iter()
        .map(|s| SessionBlock {
            networks: s.network_ids.clone(),
            first_bucket: zone.render(s.first_bucket_start),
            last_bucket_end: Timestamp::from_epoch(s.last_bucket_end)
                .map(|t| zone.render(t))
                .unwrap_or_default(),
            app_start: s.app_events.first().map(|&i| zone.render(t.events[i].at)),
            attribution: match s.attribution {
                Attribution::UsageEvents => "usage events".into(),
                Attribution::Aggregate { aggregate } => {
                    let a = &t.aggregates[aggregate];
                    format!(
                        "{:?} aggregate, last used {}",
                        a.window,
                        zone.render(a.last_used)
                    )
                    .to_lowercase()
                }
                Attribution::SameNetwork { .. } => {
                    "inherited from a session on the same network".into()
                }
                Attribution::Unattributed => "none".into(),
            },
            bytes_in: s.volume.bytes_in,
            bytes_out: s.volume.bytes_out,
            resolved_ips: s
                .resolved_ips
                .iter()
                .map(|r| match r.basis {
                    LeaseMatch::NetworkId => r.private_ip.clone(),
                    LeaseMatch::TimeOnly => format!("{} (time-only match)", r.private_ip),
                })
                .collect(),
            ambiguity_flags: s.ambiguity_flags.iter().copied().collect(),
        })
        .collect();
    FindingBlock {
        pattern: f.pattern.to_string(),
        package: f.package.clone(),
        confidence: f.confidence.to_string(),
        bytes_in: f.direction_summary.bytes_in,
        bytes_out: f.direction_summary.bytes_out,
        sessions,
        host_corroboration: f.host_corroboration.iter().map(describe_match).collect(),
        citations,
    }
}

pub fn render_report(
    analyses: &[BundleAnalysis],
    host: &HostArtifacts,
    zone: DisplayZone,
    bucket: BucketDuration,
) -> ReportDocument {
    let mut flags = BTreeSet::new();
    let bundles = analyses
        .iter()
        .map(|a| {
            for f in &a.findings {
                flags.extend(f.flags());
            }
            let mut warnings: Vec<String> = a
                .parsed
                .errors
                .iter()
                .chain(&a.parsed.warnings)
                .map(|w| format!("{}: {}", w.label, w.message))
                .collect();
            warnings.extend(a.timeline.warnings.iter().cloned());
            BundleSection {
                label: a.label.clone(),
                bundle_ref: a.bundle.bundle_manifest_digest.clone(),
                capture_time: zone.render(a.parsed.capture_time),
                device: a.bundle.device.clone(),
                warnings,
                timeline: a
                    .timeline
                    .entries
                    .iter()
                    .map(|e| TimelineLine {
                        at: zone.render(e.at),
                        source: e.source,
                        summary: render_entry(&a.timeline, e.reference, zone, bucket),
                    })
                    .collect(),
                findings: a
                    .findings
                    .iter()
                    .map(|f| finding_block(f, &a.timeline, &a.bundle, host, zone))
                    .collect(),
            }
        })
        .collect();
    ReportDocument {
        display_zone: zone.name().to_string(),
        bundles,
        limitations_appendix: flags
            .into_iter()
            .map(|flag| LimitationNote {
                flag,
                note: limitation_note(flag).to_string(),
            })
            .collect(),
        scope_note: SCOPE_NOTE.to_string(),
    }
}

impl ReportDocument {
    pub fn finding_count(&self) -> usize {
        self.bundles.iter().map(|b| b.findings.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Smartwatch triage report\n");
        let _ = writeln!(
            md,
            "Times are shown in {} with their UTC offset.\n",
            self.display_zone
        );
        if self.finding_count() == 0 {
            let _ = writeln!(md, "No detections.\n");
        }
        for b in &self.bundles {
            let _ = writeln!(md, "## Bundle {}\n", b.label);
            let _ = writeln!(md, "- Manifest digest: `{}`", b.bundle_ref);
            let _ = writeln!(md, "- Captured: {}", b.capture_time);
            if let Some(d) = &b.device {
                let _ = writeln!(
                    md,
                    "- Device: Android {} / {}{}",
                    or_dash(&d.android_version),
                    or_dash(&d.cpu_abi),
                    if d.model_number.is_empty() {
                        String::new()
                    } else {
                        format!(" / {}", d.model_number)
                    }
                );
            }
            md.push('\n');
            if !b.warnings.is_empty() {
                let _ = writeln!(md, "### Input warnings\n");
                for w in &b.warnings {
                    let _ = writeln!(md, "- {w}");
                }
                md.push('\n');
            }
            let _ = writeln!(md, "### Findings\n");
            if b.findings.is_empty() {
                let _ = writeln!(md, "No detections.\n");
            }
            for (i, f) in b.findings.iter().enumerate() {
                let _ = writeln!(
                    md,
                    "#### {}. {} ({})\n",
                    i + 1,
                    f.pattern,
                    f.package.as_deref().unwrap_or("unattributed")
                );
                let _ = writeln!(md, "- Confidence: **{}**", f.confidence);
                let _ = writeln!(
                    md,
                    "- Bytes in: {} / bytes out: {}",
                    f.bytes_in, f.bytes_out
                );
                for (j, s) in f.sessions.iter().enumerate() {
                    let _ = writeln!(
                        md,
                        "- Session {}: {} from {} to {}",
                        j + 1,
                        s.networks.join(", "),
                        s.first_bucket,
                        s.last_bucket_end
                    );
                    if let Some(start) = &s.app_start {
                        let _ = writeln!(md, "  - App start: {start}");
                    }
                    let _ = writeln!(md, "  - Attribution: {}", s.attribution);
                    let _ = writeln!(
                        md,
                        "  - Bytes in: {} / bytes out: {}",
                        s.bytes_in, s.bytes_out
                    );
                    if !s.resolved_ips.is_empty() {
                        let _ = writeln!(md, "  - Private IP: {}", s.resolved_ips.join(", "));
                    }
                    if !s.ambiguity_flags.is_empty() {
                        let flags: Vec<&str> =
                            s.ambiguity_flags.iter().map(|f| f.as_str()).collect();
                        let _ = writeln!(md, "  - Flags: {}", flags.join(", "));
                    }
                }
                for h in &f.host_corroboration {
                    let _ = writeln!(md, "- Host evidence: {h}");
                }
                let _ = writeln!(md, "- Evidence:");
                for c in &f.citations {
                    let _ = writeln!(md, "  - {} ({}) `{}`", c.label, c.source_kind, c.digest);
                }
                md.push('\n');
            }
            let _ = writeln!(md, "### Timeline\n");
            if b.timeline.is_empty() {
                let _ = writeln!(md, "No events.\n");
            } else {
                let _ = writeln!(md, "| Time | Source | Entry |");
                let _ = writeln!(md, "|---|---|---|");
                for l in &b.timeline {
                    let _ = writeln!(md, "| {} | {} | {} |", l.at, l.source, l.summary);
                }
                md.push('\n');
            }
        }
        let _ = writeln!(md, "## Limitations\n");
        for n in &self.limitations_appendix {
            let _ = writeln!(md, "- **{}**: {}", n.flag, n.note);
        }
        let _ = writeln!(md, "- {}", self.scope_note);
        md
    }
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}
