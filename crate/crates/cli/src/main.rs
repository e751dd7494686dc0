use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use watchtrace::acquisition::{
    default_plan, run_acquisition, AcquisitionPlan, AdbExecutor, Clock, CommandExecutor,
    FakeExecutor, FixedClock, SystemClock,
};
use watchtrace::analysis::{analyze_bundle, parse_bundle, BundleAnalysis};
use watchtrace::correlate::{CorrelationConfig, RuleSet};
use watchtrace::evidence::{verify_bundle, DeviceProfile, EvidenceBundle, HashAlgorithm};
use watchtrace::host::{load_host_artifacts, HostArtifactPaths, HostArtifacts};
use watchtrace::policy::{audit_inventory, load_inventory, render_verdict_table, Verdict};
use watchtrace::report::render_report;
use watchtrace::simulator::{
    case_study, random_scenario, render_host_artifacts, synthetic_bundle, write_host_artifacts,
    RandomBounds, Scenario,
};
use watchtrace::time::{BucketDuration, DisplayZone, Timestamp};

/// Smartwatch exfiltration triage: acquire, verify, correlate, report.
#[derive(Parser)]
#[command(name = "watchtrace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect dumpsys output over adb into a sealed evidence bundle.
    Acquire(AcquireArgs),
    /// Re-hash a bundle's raw payloads against its manifest.
    Verify(VerifyArgs),
    /// Parse a bundle's dumps and print the structured result as JSON.
    Parse(ParseArgs),
    /// Correlate bundles with host artifacts and print findings as JSON.
    Correlate(AnalysisArgs),
    /// Render the investigator report.
    Report(ReportArgs),
    /// Check sideloaded packages against the watch platform policy.
    Audit(AuditArgs),
    /// Write a synthetic bundle and host artifacts for a scenario.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum HashArg {
    Sha256,
    Sha512,
}

impl From<HashArg> for HashAlgorithm {
    fn from(h: HashArg) -> Self {
        match h {
            HashArg::Sha256 => HashAlgorithm::Sha256,
            HashArg::Sha512 => HashAlgorithm::Sha512,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Md,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Ftp,
    Sftp,
    Camera,
    SameBucket,
    FtpRebooted,
    Composite,
}

#[derive(Args)]
struct AcquireArgs {
    /// adb serial of the paired watch.
    #[arg(
        long,
        env = "WATCHTRACE_SERIAL",
        conflicts_with = "transcript",
        required_unless_present = "transcript"
    )]
    serial: Option<String>,
    /// Replay recorded command output instead of talking to a device.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Acquisition plan TOML; the built-in plan is used when absent.
    #[arg(long, env = "WATCHTRACE_PLAN")]
    plan: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Label of the examiner workstation recorded in every item.
    #[arg(long, env = "WATCHTRACE_ORIGIN", default_value = "examiner-pc")]
    origin: String,
    #[arg(long, value_enum, env = "WATCHTRACE_HASH", default_value = "sha256")]
    hash: HashArg,
    /// Pin the host clock to this epoch second.
    #[arg(long)]
    host_time: Option<i64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Zone of the wall-clock strings inside the dumps.
    #[arg(long, env = "WATCHTRACE_DEVICE_ZONE", default_value = "Asia/Seoul")]
    device_zone: DisplayZone,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Bundle directory; repeat for several devices or captures.
    #[arg(long, required = true)]
    bundle: Vec<PathBuf>,
    /// Directory holding FileZilla XML and known_hosts files.
    #[arg(long, env = "WATCHTRACE_HOST_ARTIFACTS")]
    host_artifacts: Option<PathBuf>,
    /// Pattern rule TOML; the built-in rules are used when absent.
    #[arg(long, env = "WATCHTRACE_RULES")]
    rules: Option<PathBuf>,
    #[arg(long, env = "WATCHTRACE_BUCKET_SECONDS", default_value_t = 3600)]
    bucket_seconds: u32,
    /// Zone of the wall-clock strings inside the dumps.
    #[arg(long, env = "WATCHTRACE_DEVICE_ZONE", default_value = "Asia/Seoul")]
    device_zone: DisplayZone,
    /// Zone for rendered times.
    #[arg(long, env = "WATCHTRACE_DISPLAY_ZONE", default_value = "Asia/Seoul")]
    display_zone: DisplayZone,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long, value_enum, default_value = "md")]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// JSON list of manifests, or a directory of manifest XML / aapt dumps.
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long, env = "WATCHTRACE_DEVICE_ABI", conflicts_with = "bundle")]
    device_abi: Option<String>,
    /// Take the device ABI from this bundle's device profile.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, group = "source")]
    seed: Option<u64>,
    #[arg(long, group = "source")]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, group = "source")]
    case: Option<CaseArg>,
    /// Zone of the wall-clock strings inside the dumps.
    #[arg(long, env = "WATCHTRACE_DEVICE_ZONE", default_value = "Asia/Seoul")]
    device_zone: DisplayZone,
    #[arg(long, default_value_t = 3600)]
    bucket_seconds: u32,
    #[arg(long, env = "WATCHTRACE_ORIGIN", default_value = "examiner-pc")]
    origin: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Acquire(a) => acquire(a),
        Command::Verify(a) => verify(a),
        Command::Parse(a) => parse(a),
        Command::Correlate(a) => correlate(a),
        Command::Report(a) => report(a),
        Command::Audit(a) => audit(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(clean) if clean => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_bundle(dir: &Path) -> Result<(EvidenceBundle, BTreeMap<String, Vec<u8>>)> {
    EvidenceBundle::read_dir(dir).with_context(|| format!("reading bundle {}", dir.display()))
}

fn bundle_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn acquire(a: AcquireArgs) -> Result<bool> {
    let plan = match &a.plan {
        Some(p) => AcquisitionPlan::from_toml(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => default_plan(),
    };
    let mut executor: Box<dyn CommandExecutor> = match (&a.serial, &a.transcript) {
        (_, Some(t)) => {
            let text = fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
            Box::new(FakeExecutor::from_transcript(
                &text,
                t.parent().unwrap_or(Path::new(".")),
            )?)
        }
        (Some(serial), None) => Box::new(AdbExecutor::new(serial.clone())),
        (None, None) => bail!("either --serial or --transcript is required"),
    };
    let clock: Box<dyn Clock> = match a.host_time {
        Some(t) => Box::new(FixedClock(Timestamp::from_epoch(t)?)),
        None => Box::new(SystemClock),
    };
    let acq = run_acquisition(
        executor.as_mut(),
        &plan,
        clock.as_ref(),
        &a.origin,
        a.hash.into(),
    )?;
    acq.bundle.write_dir(&a.out, &acq.payloads)?;
    for f in &acq.bundle.failures {
        eprintln!("step {} failed: {}", f.label, f.message);
    }
    println!(
        "{} items sealed in {} (manifest {})",
        acq.bundle.items.len(),
        a.out.display(),
        acq.bundle.bundle_manifest_digest
    );
    Ok(acq.bundle.failures.is_empty())
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let (bundle, payloads) = read_bundle(&a.bundle)?;
    let report = verify_bundle(&bundle, &payloads);
    match a.format {
        TextOrJson::Json => emit(&serde_json::to_string_pretty(&report)?, None)?,
        TextOrJson::Text => {
            let mut text = String::new();
            for c in &report.items {
                let status = serde_json::to_value(&c.status)?;
                text.push_str(&format!(
                    "{:<20} {:<16} {}\n",
                    c.label,
                    c.source_kind.to_string(),
                    status["status"].as_str().unwrap_or("?")
                ));
            }
            text.push_str(&format!(
                "manifest digest: {}\nresult: {}\n",
                if report.manifest_digest_ok {
                    "ok"
                } else {
                    "MISMATCH"
                },
                if report.passed { "PASS" } else { "FAIL" }
            ));
            emit(&text, None)?;
        }
    }
    Ok(report.passed)
}

fn parse(a: ParseArgs) -> Result<bool> {
    let (bundle, payloads) = read_bundle(&a.bundle)?;
    let parsed = parse_bundle(&bundle, &payloads, a.device_zone);
    emit(&serde_json::to_string_pretty(&parsed)?, None)?;
    Ok(parsed.errors.is_empty())
}

struct Analyses {
    analyses: Vec<BundleAnalysis>,
    host: HostArtifacts,
    input_errors: usize,
}

fn run_analyses(a: &AnalysisArgs) -> Result<(Analyses, CorrelationConfig)> {
    let config = CorrelationConfig {
        bucket: BucketDuration::new(a.bucket_seconds)?,
        rules: match &a.rules {
            Some(p) => RuleSet::load(p)?,
            None => RuleSet::default(),
        },
        ..Default::default()
    };
    let mut input_errors = 0;
    let host = match &a.host_artifacts {
        Some(dir) => {
            if !dir.is_dir() {
                bail!("host artifact directory {} not found", dir.display());
            }
            let (host, errors) = load_host_artifacts(
                dir,
                &HostArtifactPaths::default(),
                SystemClock.now(),
                "host",
            );
            for e in &errors {
                eprintln!("{}: {}", e.path.display(), e.message);
            }
            input_errors += errors.len();
            host
        }
        None => HostArtifacts::default(),
    };
    let mut analyses = Vec::new();
    for dir in &a.bundle {
        let (bundle, payloads) = read_bundle(dir)?;
        let check = verify_bundle(&bundle, &payloads);
        if !check.passed {
            eprintln!(
                "{}: integrity check failed ({}); bundle skipped",
                dir.display(),
                check.failed_labels().join(", ")
            );
            input_errors += 1;
            continue;
        }
        let analysis = analyze_bundle(
            &bundle_label(dir),
            &bundle,
            &payloads,
            &host,
            &config,
            a.device_zone,
        );
        for e in &analysis.parsed.errors {
            eprintln!("{}: {}: {}", dir.display(), e.label, e.message);
        }
        input_errors += analysis.parsed.errors.len();
        analyses.push(analysis);
    }
    Ok((
        Analyses {
            analyses,
            host,
            input_errors,
        },
        config,
    ))
}

fn correlate(a: AnalysisArgs) -> Result<bool> {
    let (run, _) = run_analyses(&a)?;
    let bundles: Vec<_> = run
        .analyses
        .iter()
        .map(|x| {
            json!({
                "label": x.label,
                "bundle_ref": x.bundle.bundle_manifest_digest,
                "findings": x.findings,
                "timeline": x.timeline,
            })
        })
        .collect();
    emit(
        &serde_json::to_string_pretty(&json!({ "bundles": bundles }))?,
        None,
    )?;
    let findings: usize = run.analyses.iter().map(|x| x.findings.len()).sum();
    Ok(findings == 0 && run.input_errors == 0)
}

fn report(a: ReportArgs) -> Result<bool> {
    let (run, config) = run_analyses(&a.analysis)?;
    let doc = render_report(
        &run.analyses,
        &run.host,
        a.analysis.display_zone,
        config.bucket,
    );
    let text = match a.format {
        ReportFormat::Md => doc.to_markdown(),
        ReportFormat::Json => doc.to_json(),
    };
    emit(&text, a.out.as_deref())?;
    Ok(doc.finding_count() == 0 && run.input_errors == 0)
}

fn audit(a: AuditArgs) -> Result<bool> {
    let cpu_abi = match (&a.device_abi, &a.bundle) {
        (Some(abi), _) => abi.clone(),
        (None, Some(dir)) => {
            let (bundle, _) = read_bundle(dir)?;
            bundle.device.map(|d| d.cpu_abi).unwrap_or_default()
        }
        (None, None) => String::new(),
    };
    let device = DeviceProfile {
        cpu_abi,
        ..Default::default()
    };
    let (manifests, errors) = load_inventory(&a.inventory);
    for e in &errors {
        eprintln!("{}: {}", e.path.display(), e.message);
    }
    let verdicts = audit_inventory(&manifests, &device);
    match a.format {
        TextOrJson::Text => emit(&render_verdict_table(&verdicts), None)?,
        TextOrJson::Json => emit(&serde_json::to_string_pretty(&verdicts)?, None)?,
    }
    Ok(errors.is_empty() && verdicts.iter().all(|v| v.verdict == Verdict::Compliant))
}

fn generate(a: GenerateArgs) -> Result<bool> {
    let scenarios: Vec<(String, Scenario)> = if let Some(seed) = a.seed {
        vec![(
            "bundle".into(),
            random_scenario(seed, RandomBounds::default()),
        )]
    } else if let Some(path) = &a.scenario {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        vec![("bundle".into(), Scenario::from_toml(&text)?)]
    } else if let Some(case) = a.case {
        match case {
            CaseArg::Ftp => vec![("bundle".into(), case_study::ftp_case())],
            CaseArg::Sftp => vec![("bundle".into(), case_study::sftp_case())],
            CaseArg::Camera => vec![("bundle".into(), case_study::camera_case())],
            CaseArg::SameBucket => vec![("bundle".into(), case_study::same_bucket_case())],
            CaseArg::FtpRebooted => vec![("bundle".into(), case_study::ftp_rebooted_case())],
            CaseArg::Composite => case_study::composite()
                .into_iter()
                .map(|(name, s)| (format!("bundle-{name}"), s))
                .collect(),
        }
    } else {
        bail!("one of --seed, --scenario or --case is required");
    };
    let bucket = BucketDuration::new(a.bucket_seconds)?;
    fs::create_dir_all(&a.out)?;
    let mut host_side = Vec::new();
    for (name, s) in &scenarios {
        let (bundle, payloads) = synthetic_bundle(s, a.device_zone, bucket, &a.origin)?;
        let dir = a.out.join(name);
        bundle.write_dir(&dir, &payloads)?;
        fs::write(dir.join("scenario.toml"), s.to_toml())?;
        host_side.extend(s.host_side.iter().cloned());
        println!("{}", dir.display());
    }
    let mut merged = scenarios[0].1.clone();
    merged.host_side = host_side;
    let host = render_host_artifacts(&merged);
    let host_dir = a.out.join("host");
    write_host_artifacts(&host, &host_dir)?;
    println!("{}", host_dir.display());
    Ok(true)
}
