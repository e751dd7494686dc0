//! Runs the parsers and the correlator over a stored evidence bundle.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::correlate::{correlate, AppNetworkSession, CorrelationConfig, Finding, Timeline};
use crate::dumpsys::{
    parse_netstats, parse_network_stack, parse_usagestats, NetUsageRecord, NetworkStackLog, Parsed,
    UsageReport,
};
use crate::error::ParseError;
use crate::evidence::{EvidenceBundle, SourceKind};
use crate::host::HostArtifacts;
use crate::time::{DisplayZone, Timestamp};

/// A problem with one input that did not stop the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputIssue {
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParsedBundle {
    pub capture_time: Timestamp,
    pub usage: UsageReport,
    pub net: Vec<NetUsageRecord>,
    pub leases: NetworkStackLog,
    pub warnings: Vec<InputIssue>,
    pub errors: Vec<InputIssue>,
}

#[derive(Debug, Clone)]
pub struct BundleAnalysis {
    pub label: String,
    pub bundle: EvidenceBundle,
    pub parsed: ParsedBundle,
    pub timeline: Timeline,
    pub sessions: Vec<AppNetworkSession>,
    pub findings: Vec<Finding>,
}

fn parse_item<T>(
    bundle: &EvidenceBundle,
    payloads: &BTreeMap<String, Vec<u8>>,
    kind: SourceKind,
    parse: impl FnOnce(&str) -> Result<Parsed<T>, ParseError>,
    warnings: &mut Vec<InputIssue>,
    errors: &mut Vec<InputIssue>,
) -> Option<T> {
    let Some(item) = bundle.item_of_kind(kind) else {
        errors.push(InputIssue {
            label: kind.to_string(),
            message: format!("bundle has no {kind} item"),
        });
        return None;
    };
    let Some(bytes) = payloads.get(&item.label) else {
        errors.push(InputIssue {
            label: item.label.clone(),
            message: "raw bytes missing".into(),
        });
        return None;
    };
    match parse(&String::from_utf8_lossy(bytes)) {
        Ok(p) => {
            warnings.extend(p.warnings.into_iter().map(|w| InputIssue {
                label: item.label.clone(),
                message: format!("line {}: {}", w.line, w.message),
            }));
            Some(p.value)
        }
        Err(ParseError::EmptyInput) => {
            warnings.push(InputIssue {
                label: item.label.clone(),
                message: "empty output".into(),
            });
            None
        }
        Err(e) => {
            errors.push(InputIssue {
                label: item.label.clone(),
                message: e.to_string(),
            });
            None
        }
    }
}

/// Parses the three dumps. The usagestats collection time, shifted onto the
/// device clock by the measured offset, anchors the 24 h detail window.
pub fn parse_bundle(
    bundle: &EvidenceBundle,
    payloads: &BTreeMap<String, Vec<u8>>,
    zone: DisplayZone,
) -> ParsedBundle {
    let capture_time = bundle
        .item_of_kind(SourceKind::Usagestats)
        .map(|i| i.collected_at)
        .or_else(|| bundle.items.iter().map(|i| i.collected_at).max())
        .unwrap_or(Timestamp::EPOCH)
        .add_seconds(bundle.clock_offset_seconds.unwrap_or(0));
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    let usage = parse_item(
        bundle,
        payloads,
        SourceKind::Usagestats,
        |t| parse_usagestats(t, capture_time, zone),
        &mut warnings,
        &mut errors,
    )
    .unwrap_or_else(|| UsageReport::empty(capture_time));
    let net = parse_item(
        bundle,
        payloads,
        SourceKind::Netstats,
        parse_netstats,
        &mut warnings,
        &mut errors,
    )
    .unwrap_or_default();
    let leases = parse_item(
        bundle,
        payloads,
        SourceKind::NetworkStack,
        |t| parse_network_stack(t, zone),
        &mut warnings,
        &mut errors,
    )
    .unwrap_or_default();
    ParsedBundle {
        capture_time,
        usage,
        net,
        leases,
        warnings,
        errors,
    }
}

pub fn analyze_bundle(
    label: &str,
    bundle: &EvidenceBundle,
    payloads: &BTreeMap<String, Vec<u8>>,
    host: &HostArtifacts,
    config: &CorrelationConfig,
    zone: DisplayZone,
) -> BundleAnalysis {
    let parsed = parse_bundle(bundle, payloads, zone);
    let (timeline, sessions, findings) = correlate(
        &parsed.usage,
        &parsed.net,
        &parsed.leases,
        &host.ftp_entries,
        &host.known_hosts,
        config,
    );
    BundleAnalysis {
        label: label.to_string(),
        bundle: bundle.clone(),
        parsed,
        timeline,
        sessions,
        findings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{
        seal_bundle, seal_bundle_with, EvidenceItem, HashAlgorithm, SealOptions,
    };

    fn item(label: &str, kind: SourceKind, at: i64, bytes: &[u8]) -> EvidenceItem {
        EvidenceItem::capture(
            label,
            kind,
            Timestamp::from_epoch(at).unwrap(),
            "pc",
            bytes,
            HashAlgorithm::Sha256,
        )
    }

    #[test]
    fn missing_kinds_are_errors_not_panics() {
        let raw = b"Xt stats:\n".to_vec();
        let b = seal_bundle(
            &[(item("netstats", SourceKind::Netstats, 100, &raw), &raw)],
            None,
        )
        .unwrap();
        let payloads = BTreeMap::from([("netstats".to_string(), raw)]);
        let p = parse_bundle(&b, &payloads, DisplayZone::default());
        assert_eq!(p.capture_time.epoch_seconds(), 100);
        assert_eq!(p.errors.len(), 2);
        assert!(p.net.is_empty());
    }

    #[test]
    fn broken_item_is_reported_and_rest_still_parse() {
        let usage = b"Last 24 hour events\n".to_vec();
        let stack = b"   \n".to_vec();
        let net = b"Xt stats:\n  ident=[{networkId=\"a\"}]\n  st=0 rb=x rp=0 tb=0 tp=0\n".to_vec();
        let b = seal_bundle(
            &[
                (
                    item("usagestats", SourceKind::Usagestats, 5000, &usage),
                    &usage,
                ),
                (
                    item("network_stack", SourceKind::NetworkStack, 5000, &stack),
                    &stack,
                ),
                (item("netstats", SourceKind::Netstats, 5000, &net), &net),
            ],
            None,
        )
        .unwrap();
        let payloads = BTreeMap::from([
            ("usagestats".to_string(), usage),
            ("network_stack".to_string(), stack),
            ("netstats".to_string(), net),
        ]);
        let p = parse_bundle(&b, &payloads, DisplayZone::default());
        assert!(p.errors.is_empty());
        assert_eq!(p.warnings.len(), 2);
    }

    #[test]
    fn capture_time_follows_device_clock() {
        let raw = b"Last 24 hour events\n".to_vec();
        let b = seal_bundle_with(
            &[(item("usagestats", SourceKind::Usagestats, 1000, &raw), &raw)],
            None,
            SealOptions {
                clock_offset_seconds: Some(-300),
                ..Default::default()
            },
        )
        .unwrap();
        let payloads = BTreeMap::from([("usagestats".to_string(), raw)]);
        assert_eq!(
            parse_bundle(&b, &payloads, DisplayZone::default())
                .capture_time
                .epoch_seconds(),
            700
        );
    }
}
