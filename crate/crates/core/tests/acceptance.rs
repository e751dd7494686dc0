//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use watchtrace::analysis::{analyze_bundle, BundleAnalysis};
use watchtrace::correlate::{
    AmbiguityFlag, Confidence, CorrelationConfig, Finding, LeaseMatch, Pattern,
};
use watchtrace::dumpsys::{parse_netstats, parse_network_stack, parse_usagestats};
use watchtrace::evidence::{verify_bundle, DeviceProfile, EvidenceBundle};
use watchtrace::host::{load_host_artifacts, HostArtifactPaths, HostArtifacts};
use watchtrace::policy::{
    audit_inventory, check_abi, check_watch_policy, combine, parse_manifest, Verdict,
};
use watchtrace::report::{render_report, FindingBlock};
use watchtrace::simulator::{
    case_study, correlate_rendered, oracle_findings, random_scenario, render_dumps, signatures,
    synthetic_bundle, truth_aggregates, truth_buckets, truth_events, truth_leases, RandomBounds,
    Scenario,
};
use watchtrace::time::{BucketDuration, DisplayZone, Timestamp};

/// Relative tolerance on byte totals quoted in MB (10^6 bytes).
const MB_TOLERANCE: f64 = 0.01;
const CASE_RUNTIME_LIMIT: Duration = Duration::from_secs(1);
const ORACLE_SEEDS: u64 = 250;
const ORACLE_RUNTIME_LIMIT: Duration = Duration::from_secs(60);
const MB: f64 = 1e6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: u64, mb: f64) -> bool {
    (actual as f64 - mb * MB).abs() <= mb * MB * MB_TOLERANCE
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load(dir: &Path) -> Result<(EvidenceBundle, BTreeMap<String, Vec<u8>>), String> {
    EvidenceBundle::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn host(dir: &Path) -> Result<HostArtifacts, String> {
    let (h, errors) =
        load_host_artifacts(dir, &HostArtifactPaths::default(), Timestamp::EPOCH, "host");
    ensure(errors.is_empty(), || {
        format!("host artifact errors: {errors:?}")
    })?;
    Ok(h)
}

fn analyze(bundle_dir: &str, host: &HostArtifacts) -> Result<(BundleAnalysis, Duration), String> {
    let (bundle, payloads) = load(&fixtures().join("cases").join(bundle_dir))?;
    let started = Instant::now();
    let a = analyze_bundle(
        bundle_dir,
        &bundle,
        &payloads,
        host,
        &CorrelationConfig::default(),
        DisplayZone::default(),
    );
    let _ = render_report(
        std::slice::from_ref(&a),
        host,
        DisplayZone::default(),
        BucketDuration::default(),
    );
    let elapsed = started.elapsed();
    ensure(
        a.parsed.errors.is_empty() && a.parsed.warnings.is_empty(),
        || {
            format!(
                "input issues: {:?} {:?}",
                a.parsed.errors, a.parsed.warnings
            )
        },
    )?;
    Ok((a, elapsed))
}

fn only_finding(a: &BundleAnalysis, pattern: Pattern) -> Result<(&Finding, FindingBlock), String> {
    let matching: Vec<_> = a.findings.iter().filter(|f| f.pattern == pattern).collect();
    ensure(matching.len() == 1, || {
        format!("expected one {pattern} finding, got {}", matching.len())
    })?;
    let doc = render_report(
        std::slice::from_ref(a),
        &HostArtifacts::default(),
        DisplayZone::default(),
        BucketDuration::default(),
    );
    let block = doc.bundles[0]
        .findings
        .iter()
        .find(|b| b.pattern == pattern.as_str())
        .cloned()
        .ok_or("finding missing from report")?;
    Ok((matching[0], block))
}

struct CaseExpect {
    bundle: &'static str,
    pattern: Pattern,
    package: &'static str,
    start: &'static str,
    ssid: &'static str,
    ip: &'static str,
}

fn check_transfer_case(c: &CaseExpect) -> Result<(Finding, BundleAnalysis, Duration), String> {
    let with_host = host(&fixtures().join("cases/host"))?;
    let (a, elapsed) = analyze(c.bundle, &with_host)?;
    ensure(elapsed < CASE_RUNTIME_LIMIT, || {
        format!("runtime {elapsed:?}")
    })?;
    let (f, block) = only_finding(&a, c.pattern)?;
    ensure(f.package.as_deref() == Some(c.package), || {
        format!("package {:?}", f.package)
    })?;
    ensure(f.sessions.len() == 1, || {
        format!("{} sessions", f.sessions.len())
    })?;
    let s = &block.sessions[0];
    ensure(
        s.app_start.as_deref().is_some_and(|t| t.contains(c.start)),
        || format!("app start {:?}", s.app_start),
    )?;
    ensure(s.networks == [c.ssid], || {
        format!("networks {:?}", s.networks)
    })?;
    ensure(s.resolved_ips == [c.ip], || {
        format!("ips {:?}", s.resolved_ips)
    })?;
    ensure(f.confidence == Confidence::Corroborated, || {
        format!("confidence {}", f.confidence)
    })?;
    ensure(f.host_corroboration.iter().all(|h| h.ip() == c.ip), || {
        "stray host match".into()
    })?;
    Ok((f.clone(), a, elapsed))
}

fn criterion_1() -> Outcome {
    let expect = CaseExpect {
        bundle: "bundle-ftp",
        pattern: Pattern::FtpServerExfil,
        package: case_study::FTP_PACKAGE,
        start: "2023-05-11 01:14:16",
        ssid: case_study::FTP_SSID,
        ip: case_study::FTP_IP,
    };
    let (f, _, elapsed) = check_transfer_case(&expect)?;
    ensure(within(f.direction_summary.bytes_in, 47.0), || {
        format!("bytes_in {}", f.direction_summary.bytes_in)
    })?;
    ensure(
        f.host_corroboration
            .iter()
            .any(|h| matches!(h, watchtrace::correlate::HostMatch::Ftp { .. })),
        || "no recentservers match".into(),
    )?;
    let (withheld, _) = analyze("bundle-ftp", &HostArtifacts::default())?;
    let (g, _) = only_finding(&withheld, Pattern::FtpServerExfil)?;
    ensure(g.confidence == Confidence::Consistent, || {
        format!("withheld confidence {}", g.confidence)
    })?;
    Ok(format!(
        "bytes_in {} ({:+.2}% of 47 MB), corroborated with recentservers, consistent without, {elapsed:?}",
        f.direction_summary.bytes_in,
        (f.direction_summary.bytes_in as f64 / (47.0 * MB) - 1.0) * 100.0
    ))
}

fn criterion_2() -> Outcome {
    let expect = CaseExpect {
        bundle: "bundle-sftp",
        pattern: Pattern::SftpServerExfil,
        package: case_study::SFTP_PACKAGE,
        start: "21:10:06",
        ssid: case_study::SFTP_SSID,
        ip: case_study::SFTP_IP,
    };
    let (f, _, elapsed) = check_transfer_case(&expect)?;
    ensure(
        f.host_corroboration
            .iter()
            .any(|h| matches!(h, watchtrace::correlate::HostMatch::KnownHost { .. })),
        || "no known_hosts match".into(),
    )?;
    Ok(format!("corroborated via known_hosts, {elapsed:?}"))
}

fn criterion_3() -> Outcome {
    let (a, elapsed) = analyze("bundle-camera", &host(&fixtures().join("cases/host"))?)?;
    let (f, block) = only_finding(&a, Pattern::HiddenCameraControl)?;
    ensure(
        f.package.as_deref() == Some(case_study::CAMERA_PACKAGE),
        || format!("package {:?}", f.package),
    )?;
    ensure(f.sessions.len() == 2, || {
        format!("{} sessions", f.sessions.len())
    })?;
    let live = f
        .sessions
        .iter()
        .zip(&block.sessions)
        .find(|(s, _)| !s.app_events.is_empty())
        .ok_or("no in-window session")?;
    ensure(live.0.network_ids == [case_study::CAMERA_SSID], || {
        format!("networks {:?}", live.0.network_ids)
    })?;
    ensure(within(live.0.volume.bytes_out, 31.0), || {
        format!("in-window out {}", live.0.volume.bytes_out)
    })?;
    ensure(
        !live.0.has_flag(AmbiguityFlag::UsageEvidenceExpired),
        || "live session flagged expired".into(),
    )?;
    let expired = f
        .sessions
        .iter()
        .find(|s| s.first_bucket_start.epoch_seconds() == case_study::CAMERA_EXPIRED_ST)
        .ok_or("no session at the expired bucket")?;
    ensure(expired.app_events.is_empty(), || {
        "expired session has events".into()
    })?;
    ensure(within(expired.volume.bytes_out, 125.0), || {
        format!("expired out {}", expired.volume.bytes_out)
    })?;
    ensure(
        expired.has_flag(AmbiguityFlag::UsageEvidenceExpired),
        || "expired session not flagged".into(),
    )?;
    Ok(format!(
        "in-window out {} on {}, st={} out {} flagged usage_evidence_expired, {elapsed:?}",
        live.0.volume.bytes_out,
        live.1.networks.join(","),
        expired.first_bucket_start.epoch_seconds(),
        expired.volume.bytes_out
    ))
}

fn criterion_4() -> Outcome {
    let s = case_study::same_bucket_case();
    let out = correlate_rendered(
        &s,
        DisplayZone::default(),
        &CorrelationConfig::default(),
        true,
    )
    .map_err(|e| e.to_string())?;
    let flagged: Vec<_> = out
        .sessions
        .iter()
        .filter(|x| x.has_flag(AmbiguityFlag::MultiNetworkSameBucket))
        .collect();
    ensure(flagged.len() == 1, || {
        format!("{} flagged sessions", flagged.len())
    })?;
    let time_only = flagged[0]
        .resolved_ips
        .iter()
        .filter(|r| r.basis == LeaseMatch::TimeOnly)
        .count();
    ensure(time_only > 0, || {
        "scenario produced no time-only lease match".into()
    })?;
    ensure(!out.ftp_entries.is_empty(), || {
        "no host artifacts supplied".into()
    })?;
    ensure(
        out.findings
            .iter()
            .all(|f| f.confidence != Confidence::Corroborated),
        || "corroborated through a time-only lease".into(),
    )?;
    Ok(format!(
        "1 session flagged across {}, {time_only} time-only lease(s) not used for corroboration",
        flagged[0].network_ids.join("+")
    ))
}

fn criterion_5() -> Outcome {
    let cfg = CorrelationConfig::default();
    let started = Instant::now();
    let mut findings = 0;
    for seed in 0..ORACLE_SEEDS {
        let s = random_scenario(seed, RandomBounds::default());
        let out = correlate_rendered(&s, DisplayZone::default(), &cfg, true)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let got = signatures(&out.findings, &out.timeline);
        let want = oracle_findings(&s, &cfg.rules, cfg.bucket);
        ensure(got == want, || format!("seed {seed} differs from oracle"))?;
        findings += want.len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < ORACLE_RUNTIME_LIMIT, || {
        format!("runtime {elapsed:?}")
    })?;
    Ok(format!(
        "{ORACLE_SEEDS} seeds, {findings} findings identical, {elapsed:?}"
    ))
}

fn round_trip(s: &Scenario) -> Result<(), String> {
    let zone = DisplayZone::default();
    let d = BucketDuration::default();
    let dumps = render_dumps(s, zone, d).map_err(|e| e.to_string())?;
    let usage =
        parse_usagestats(&dumps.usagestats, s.capture_time, zone).map_err(|e| e.to_string())?;
    ensure(usage.warnings.is_empty(), || "usagestats warnings".into())?;
    ensure(usage.value.events_24h == truth_events(s), || {
        "events differ".into()
    })?;
    ensure(usage.value.aggregates == truth_aggregates(s), || {
        "aggregates differ".into()
    })?;
    let net = parse_netstats(&dumps.netstats).map_err(|e| e.to_string())?;
    let truth = truth_buckets(s, d);
    ensure(
        net.warnings.is_empty() && net.value.len() == truth.len(),
        || "record count differs".into(),
    )?;
    for (r, t) in net.value.iter().zip(&truth) {
        ensure(
            (&r.network_id, r.st, r.rb, r.tb) == (&t.ssid, t.st, t.rb, t.tb),
            || format!("record {r:?}"),
        )?;
    }
    let total: u64 = net.value.iter().map(|r| r.total_bytes()).sum();
    ensure(total == s.total_bytes(), || {
        format!("bytes {total} != {}", s.total_bytes())
    })?;
    let stack = parse_network_stack(&dumps.network_stack, zone).map_err(|e| e.to_string())?;
    ensure(
        stack.warnings.is_empty() && stack.value.leases == truth_leases(s),
        || "leases differ".into(),
    )?;
    Ok(())
}

fn criterion_6() -> Outcome {
    let mut records = 0;
    for seed in 0..ORACLE_SEEDS {
        let s = random_scenario(seed, RandomBounds::default());
        round_trip(&s).map_err(|e| format!("seed {seed}: {e}"))?;
        records += truth_buckets(&s, BucketDuration::default()).len();
    }
    for (name, s) in case_study::composite() {
        round_trip(&s).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!(
        "{ORACLE_SEEDS} seeds and 3 cases, {records} records recovered exactly, bytes conserved"
    ))
}

fn reboot_preserves_patterns(with: &Scenario, without: &Scenario) -> Result<bool, String> {
    let cfg = CorrelationConfig::default();
    let zone = DisplayZone::default();
    let a = correlate_rendered(without, zone, &cfg, true).map_err(|e| e.to_string())?;
    let b = correlate_rendered(with, zone, &cfg, true).map_err(|e| e.to_string())?;
    let boot = with.last_reboot().ok_or("no reboot")?;
    ensure(b.timeline.leases.iter().all(|l| l.at >= boot), || {
        "pre-reboot lease survived".into()
    })?;
    let key = |f: &Finding| (f.pattern, f.package.clone(), f.direction_summary);
    ensure(
        a.findings.iter().map(key).collect::<Vec<_>>()
            == b.findings.iter().map(key).collect::<Vec<_>>(),
        || "pattern assignment changed".into(),
    )?;
    let mut lost = false;
    for (fa, fb) in a.findings.iter().zip(&b.findings) {
        if fb.confidence == Confidence::Corroborated {
            ensure(fa.confidence == Confidence::Corroborated, || {
                "reboot added corroboration".into()
            })?;
        } else if fa.confidence == Confidence::Corroborated {
            lost = true;
        } else {
            ensure(fa.confidence == fb.confidence, || {
                "grading changed beyond corroboration".into()
            })?;
        }
    }
    Ok(lost)
}

fn criterion_7() -> Outcome {
    let rebooted = case_study::ftp_rebooted_case();
    let mut plain = rebooted.clone();
    plain.reboots.clear();
    ensure(reboot_preserves_patterns(&rebooted, &plain)?, || {
        "FTP case kept its corroboration".into()
    })?;
    let mut checked = 0;
    for seed in 0..ORACLE_SEEDS {
        let s = random_scenario(seed, RandomBounds::default());
        if s.reboots.is_empty() {
            continue;
        }
        let mut plain = s.clone();
        plain.reboots.clear();
        reboot_preserves_patterns(&s, &plain).map_err(|e| format!("seed {seed}: {e}"))?;
        checked += 1;
    }
    ensure(checked > 0, || "no random scenario had a reboot".into())?;
    Ok(format!("FTP case lost only its IP corroboration, {checked} rebooted random scenarios keep their patterns"))
}

const WATCH_MANIFEST: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.example.watchface">
    <uses-feature android:name="android.hardware.type.watch" />
</manifest>"#;

const PHONE_MANIFEST: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.corproxy.files">
    <uses-permission android:name="android.permission.INTERNET" />
</manifest>"#;

fn criterion_8() -> Outcome {
    let watch = parse_manifest(WATCH_MANIFEST).map_err(|e| e.to_string())?;
    let phone = parse_manifest(PHONE_MANIFEST).map_err(|e| e.to_string())?;
    ensure(
        check_watch_policy(&watch).verdict == Verdict::Compliant,
        || "watch manifest rejected".into(),
    )?;
    ensure(
        check_watch_policy(&phone).verdict == Verdict::SideloadedPhoneApp,
        || "phone manifest passed".into(),
    )?;
    let arm64 = vec!["arm64-v8a".to_string()];
    ensure(!check_abi(&arm64, "armeabi-v7a").compatible, || {
        "arm64-v8a ran on armeabi-v7a".into()
    })?;

    // (feature present, apk ABIs, device ABI) -> verdict
    let v7a = vec!["armeabi-v7a".to_string()];
    let table: [(bool, &[String], &str, Verdict); 8] = [
        (true, &v7a, "armeabi-v7a", Verdict::Compliant),
        (true, &[], "armeabi-v7a", Verdict::Compliant),
        (true, &arm64, "armeabi-v7a", Verdict::AbiIncompatible),
        (true, &v7a, "", Verdict::Unknown),
        (false, &v7a, "armeabi-v7a", Verdict::SideloadedPhoneApp),
        (false, &[], "armeabi-v7a", Verdict::SideloadedPhoneApp),
        (false, &arm64, "armeabi-v7a", Verdict::AbiIncompatible),
        (false, &v7a, "", Verdict::SideloadedPhoneApp),
    ];
    for (feature, abis, device_abi, want) in table {
        let mut m = if feature {
            watch.clone()
        } else {
            phone.clone()
        };
        m.declared_abis = abis.to_vec();
        let via_combine = {
            let abi = (!device_abi.is_empty()).then(|| check_abi(abis, device_abi));
            combine(check_watch_policy(&m), abi.as_ref(), abis, device_abi).verdict
        };
        let device = DeviceProfile {
            cpu_abi: device_abi.into(),
            ..Default::default()
        };
        let via_audit = audit_inventory(std::slice::from_ref(&m), &device)[0].verdict;
        ensure(via_combine == want && via_audit == want, || {
            format!("feature={feature} abis={abis:?} device={device_abi:?}: got {via_combine}/{via_audit}, want {want}")
        })?;
    }
    Ok("watch manifest compliant, phone manifest sideloaded, arm64-v8a on armeabi-v7a incompatible, 8-row table".into())
}

fn criterion_9() -> Outcome {
    let (bundle, payloads) = synthetic_bundle(
        &case_study::ftp_case(),
        DisplayZone::default(),
        BucketDuration::default(),
        "pc",
    )
    .map_err(|e| e.to_string())?;
    ensure(verify_bundle(&bundle, &payloads).passed, || {
        "untampered bundle failed".into()
    })?;
    let mut flips = 0;
    for (label, bytes) in &payloads {
        for i in 0..bytes.len() {
            for mask in [0x01u8, 0x80] {
                let mut tampered = payloads.clone();
                tampered.get_mut(label).unwrap()[i] ^= mask;
                let report = verify_bundle(&bundle, &tampered);
                ensure(
                    !report.passed && report.failed_labels() == [label.as_str()],
                    || format!("flip {label}[{i}]^{mask:#x} undetected"),
                )?;
                flips += 1;
            }
        }
    }
    Ok(format!(
        "{flips} single-byte flips across {} items all detected",
        payloads.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("FTP server case", criterion_1),
        ("SFTP server case", criterion_2),
        ("hidden camera case", criterion_3),
        ("same-bucket ambiguity", criterion_4),
        ("oracle equivalence", criterion_5),
        ("round-trip parsing", criterion_6),
        ("reboot volatility", criterion_7),
        ("policy audit", criterion_8),
        ("evidence integrity", criterion_9),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why}", n + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
