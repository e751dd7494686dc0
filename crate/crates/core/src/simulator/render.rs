use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::{
    truth_aggregates, truth_buckets, truth_events, truth_leases, HostArtifactKind, Scenario,
    PACKET_BYTES, WIFI_INTERFACE,
};
use crate::correlate::{correlate, AppNetworkSession, CorrelationConfig, Finding, Timeline};
use crate::dumpsys::{parse_netstats, parse_network_stack, parse_usagestats, quote};
use crate::error::{EvidenceError, ParseError, ScenarioError};
use crate::evidence::{
    seal_bundle, DeviceProfile, EvidenceBundle, EvidenceItem, HashAlgorithm, SourceKind,
};
use crate::host::{parse_filezilla, parse_known_hosts, FtpServerEntry, KnownHostEntry};
use crate::time::{BucketDuration, DisplayZone};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedDumps {
    pub usagestats: String,
    pub netstats: String,
    pub network_stack: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderedHostArtifacts {
    pub recentservers_xml: String,
    pub known_hosts: String,
}

impl RenderedHostArtifacts {
    pub fn is_empty(&self) -> bool {
        self.recentservers_xml.is_empty() && self.known_hosts.is_empty()
    }
}

fn ident(ssid: &str) -> String {
    format!(
        "ident=[{{type=WIFI, ratType=-1, networkId={}, metered=false, defaultNetwork=true}}]",
        quote(ssid)
    )
}

fn packets(bytes: u64) -> u64 {
    bytes.div_ceil(PACKET_BYTES)
}

pub fn render_dumps(
    s: &Scenario,
    zone: DisplayZone,
    duration: BucketDuration,
) -> Result<RenderedDumps, ScenarioError> {
    s.validate()?;
    let local = |t| zone.render_local(t);

    let mut usage = String::from("user=0\n");
    let _ = writeln!(
        usage,
        "Last 24 hour events (timeRange={})",
        quote(&format!(
            "{} - {}",
            local(s.detail_window_start()),
            local(s.capture_time)
        ))
    );
    for e in truth_events(s) {
        let _ = writeln!(
            usage,
            "    time={} type={} package={} class={}.MainActivity",
            quote(&local(e.at)),
            e.event_type,
            e.package,
            e.package
        );
    }
    let aggregates = truth_aggregates(s);
    for window in [
        crate::dumpsys::AggregateWindow::Week,
        crate::dumpsys::AggregateWindow::Month,
        crate::dumpsys::AggregateWindow::Year,
    ] {
        let _ = writeln!(usage, "{}", window.header());
        let _ = writeln!(
            usage,
            "  timeRange={}",
            quote(&format!(
                "{} - {}",
                local(s.capture_time.saturating_sub(window.seconds())),
                local(s.capture_time)
            ))
        );
        let _ = writeln!(usage, "  packages");
        for a in aggregates.iter().filter(|a| a.window == window) {
            let _ = writeln!(
                usage,
                "    package={} lastTimeUsed={} appLaunchCount={}",
                a.package,
                quote(&local(a.last_used)),
                a.use_count
            );
        }
    }

    let mut net = String::from(
        "Dev stats:\n  Pending bytes: 0\nXt stats:\n  Pending bytes: 0\n  History since boot:\n",
    );
    let buckets = truth_buckets(s, duration);
    let mut current: Option<&str> = None;
    for b in &buckets {
        if current != Some(b.ssid.as_str()) {
            let _ = writeln!(net, "  {} uid=-1 set=ALL tag=0x0", ident(&b.ssid));
            let _ = writeln!(
                net,
                "    NetworkStatsHistory: bucketDuration={}",
                duration.seconds()
            );
            current = Some(&b.ssid);
        }
        let _ = writeln!(
            net,
            "      st={} rb={} rp={} tb={} tp={} op=0",
            b.st,
            b.rb,
            packets(b.rb),
            b.tb,
            packets(b.tb)
        );
    }
    net.push_str("Uid stats:\n  Pending bytes: 0\n");

    let mut stack = String::from("NetworkStack version:\n  SharedLog:\n");
    if let Some(boot) = s.last_reboot() {
        let _ = writeln!(stack, "Boot time: {}", local(boot));
    }
    let _ = writeln!(stack, "IpClient.{WIFI_INTERFACE}");
    for l in truth_leases(s) {
        let mut line = format!(
            "  {} - [{}] {} ip={}/24",
            local(l.at).replacen(' ', "T", 1),
            l.interface,
            l.event_kind.as_str(),
            l.private_ip
        );
        if let Some(ssid) = &l.network_id {
            let _ = write!(line, " ssid={}", quote(ssid));
        }
        stack.push_str(&line);
        stack.push('\n');
    }

    Ok(RenderedDumps {
        usagestats: usage,
        netstats: net,
        network_stack: stack,
    })
}

/// A syntactically valid ed25519 public key blob derived from the endpoint,
/// so identical scenarios give identical files.
fn synthetic_key(host: &str, port: u16) -> String {
    let mut blob = Vec::with_capacity(51);
    blob.extend_from_slice(&11u32.to_be_bytes());
    blob.extend_from_slice(b"ssh-ed25519");
    blob.extend_from_slice(&32u32.to_be_bytes());
    blob.extend_from_slice(&Sha256::digest(format!("{host}:{port}").as_bytes()));
    STANDARD.encode(blob)
}

pub fn render_host_artifacts(s: &Scenario) -> RenderedHostArtifacts {
    let mut out = RenderedHostArtifacts::default();
    let ftp: Vec<_> = s
        .host_side
        .iter()
        .filter(|h| h.kind == HostArtifactKind::Recentservers)
        .collect();
    if !ftp.is_empty() {
        out.recentservers_xml =
            String::from("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\" ?>\n<FileZilla3 version=\"3.64.0\" platform=\"windows\">\n    <RecentServers>\n");
        for h in ftp {
            let _ = write!(
                out.recentservers_xml,
                "        <Server>\n            <Host>{}</Host>\n            <Port>{}</Port>\n            <Protocol>0</Protocol>\n            <Type>0</Type>\n            <Logontype>0</Logontype>\n        </Server>\n",
                h.host, h.port
            );
        }
        out.recentservers_xml
            .push_str("    </RecentServers>\n</FileZilla3>\n");
    }
    for h in s
        .host_side
        .iter()
        .filter(|h| h.kind == HostArtifactKind::KnownHosts)
    {
        let pattern = if h.port == 22 {
            h.host.clone()
        } else {
            format!("[{}]:{}", h.host, h.port)
        };
        let _ = writeln!(
            out.known_hosts,
            "{pattern} ssh-ed25519 {}",
            synthetic_key(&h.host, h.port)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub timeline: Timeline,
    pub sessions: Vec<AppNetworkSession>,
    pub findings: Vec<Finding>,
    pub ftp_entries: Vec<FtpServerEntry>,
    pub known_hosts: Vec<KnownHostEntry>,
    pub parse_warnings: usize,
}

/// Renders the scenario, parses the text back, and correlates. This is
/// the full pipeline an investigator would run on a real bundle.
pub fn correlate_rendered(
    s: &Scenario,
    zone: DisplayZone,
    config: &CorrelationConfig,
    with_host_artifacts: bool,
) -> Result<PipelineOutput, PipelineError> {
    let dumps = render_dumps(s, zone, config.bucket)?;
    let usage = parse_usagestats(&dumps.usagestats, s.capture_time, zone)?;
    let net = parse_netstats(&dumps.netstats)?;
    let stack = parse_network_stack(&dumps.network_stack, zone)?;
    let mut warnings = usage.warnings.len() + net.warnings.len() + stack.warnings.len();
    let (mut ftp_entries, mut known_hosts) = (Vec::new(), Vec::new());
    if with_host_artifacts {
        let host = render_host_artifacts(s);
        if !host.recentservers_xml.is_empty() {
            let p = parse_filezilla(&host.recentservers_xml)?;
            warnings += p.warnings.len();
            ftp_entries = p.value;
        }
        let p = parse_known_hosts(&host.known_hosts);
        warnings += p.warnings.len();
        known_hosts = p.value;
    }
    let (timeline, sessions, findings) = correlate(
        &usage.value,
        &net.value,
        &stack.value,
        &ftp_entries,
        &known_hosts,
        config,
    );
    Ok(PipelineOutput {
        timeline,
        sessions,
        findings,
        ftp_entries,
        known_hosts,
        parse_warnings: warnings,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

/// A sealed bundle holding the rendered dumps as a live acquisition of a
/// Galaxy Watch 5 class device would, all collected at the capture time.
pub fn synthetic_bundle(
    s: &Scenario,
    zone: DisplayZone,
    duration: BucketDuration,
    origin_label: &str,
) -> Result<(EvidenceBundle, BTreeMap<String, Vec<u8>>), PipelineError> {
    let dumps = render_dumps(s, zone, duration)?;
    let raw: [(&str, SourceKind, Vec<u8>); 5] = [
        (
            "network_stack",
            SourceKind::NetworkStack,
            dumps.network_stack.into_bytes(),
        ),
        (
            "netstats",
            SourceKind::Netstats,
            dumps.netstats.into_bytes(),
        ),
        (
            "usagestats",
            SourceKind::Usagestats,
            dumps.usagestats.into_bytes(),
        ),
        ("getprop_release", SourceKind::Getprop, b"11\n".to_vec()),
        (
            "getprop_abi",
            SourceKind::Getprop,
            b"armeabi-v7a\n".to_vec(),
        ),
    ];
    let items: Vec<(EvidenceItem, &[u8])> = raw
        .iter()
        .map(|(label, kind, bytes)| {
            (
                EvidenceItem::capture(
                    *label,
                    *kind,
                    s.capture_time,
                    origin_label,
                    bytes,
                    HashAlgorithm::default(),
                ),
                bytes.as_slice(),
            )
        })
        .collect();
    let device = DeviceProfile {
        model_number: "SM-R910".into(),
        android_version: "11".into(),
        wear_os_version: "3.5".into(),
        cpu_abi: "armeabi-v7a".into(),
        adb_host_name: origin_label.into(),
    };
    let bundle = seal_bundle(&items, Some(device))?;
    let payloads = raw
        .into_iter()
        .map(|(l, _, b)| (l.to_string(), b))
        .collect();
    Ok((bundle, payloads))
}

/// Writes `recentservers.xml` and `known_hosts` under `dir` when non-empty.
pub fn write_host_artifacts(artifacts: &RenderedHostArtifacts, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    if !artifacts.recentservers_xml.is_empty() {
        std::fs::write(dir.join("recentservers.xml"), &artifacts.recentservers_xml)?;
    }
    if !artifacts.known_hosts.is_empty() {
        std::fs::write(dir.join("known_hosts"), &artifacts.known_hosts)?;
    }
    Ok(())
}
