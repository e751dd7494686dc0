//! Live collection over the debug bridge, most volatile source first.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{AcquisitionError, ConfigError};
use crate::evidence::{
    seal_bundle_with, DeviceProfile, EvidenceBundle, EvidenceItem, HashAlgorithm, SealOptions,
    SourceKind, StepFailure,
};
use crate::time::Timestamp;

/// Command sent before any step to measure the device clock.
pub const CLOCK_PROBE: &str = "date +%s";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub status: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

pub trait CommandExecutor {
    /// Runs a shell command on the device. `Err` means the device could
    /// not be reached at all, not that the command failed.
    fn execute(&mut self, command: &str) -> Result<CommandOutput, AcquisitionError>;
}

pub trait Clock {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        Timestamp::from_epoch(secs).unwrap_or(Timestamp::EPOCH)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

/// `adb -s <serial> shell <command>`.
#[derive(Debug, Clone)]
pub struct AdbExecutor {
    pub adb: PathBuf,
    pub serial: String,
}

impl AdbExecutor {
    pub fn new(serial: impl Into<String>) -> Self {
        AdbExecutor {
            adb: PathBuf::from("adb"),
            serial: serial.into(),
        }
    }
}

impl CommandExecutor for AdbExecutor {
    fn execute(&mut self, command: &str) -> Result<CommandOutput, AcquisitionError> {
        let out = Command::new(&self.adb)
            .arg("-s")
            .arg(&self.serial)
            .arg("shell")
            .arg(command)
            .output()
            .map_err(|e| AcquisitionError::Unreachable(format!("{}: {e}", self.adb.display())))?;
        let stderr = String::from_utf8_lossy(&out.stderr);
        if stderr.starts_with("error: device") || stderr.contains("device offline") {
            return Err(AcquisitionError::Unreachable(stderr.trim().to_string()));
        }
        Ok(CommandOutput {
            status: out.status.code().unwrap_or(-1),
            stdout: out.stdout,
            stderr: out.stderr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptEntry {
    command: String,
    #[serde(default)]
    status: i32,
    #[serde(default)]
    stdout: Option<String>,
    /// Path relative to the transcript file.
    #[serde(default)]
    stdout_file: Option<PathBuf>,
    #[serde(default)]
    stderr: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptFile {
    #[serde(default)]
    unreachable: bool,
    #[serde(default, rename = "command")]
    commands: Vec<TranscriptEntry>,
}

/// Canned responses keyed by exact command string. Unknown commands exit
/// 127 like a shell would.
#[derive(Debug, Clone, Default)]
pub struct FakeExecutor {
    pub responses: BTreeMap<String, CommandOutput>,
    pub unreachable: bool,
    /// Every command received, in order.
    pub issued: Vec<String>,
}

impl FakeExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(mut self, command: &str, status: i32, stdout: impl Into<Vec<u8>>) -> Self {
        self.responses.insert(
            command.to_string(),
            CommandOutput {
                status,
                stdout: stdout.into(),
                stderr: Vec::new(),
            },
        );
        self
    }

    /// Reads a transcript: `[[command]]` tables with `command`, `status`,
    /// and `stdout` or `stdout_file`.
    pub fn from_transcript(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let file: TranscriptFile = toml::from_str(text)?;
        let mut fake = FakeExecutor {
            unreachable: file.unreachable,
            ..Default::default()
        };
        for e in file.commands {
            let stdout = match (e.stdout, e.stdout_file) {
                (Some(s), None) => s.into_bytes(),
                (None, Some(p)) => {
                    let path = base_dir.join(&p);
                    std::fs::read(&path)
                        .map_err(|err| ConfigError::Invalid(format!("{}: {err}", path.display())))?
                }
                (None, None) => Vec::new(),
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Invalid(format!(
                        "{}: give stdout or stdout_file, not both",
                        e.command
                    )))
                }
            };
            fake.responses.insert(
                e.command,
                CommandOutput {
                    status: e.status,
                    stdout,
                    stderr: e.stderr.into_bytes(),
                },
            );
        }
        Ok(fake)
    }
}

impl CommandExecutor for FakeExecutor {
    fn execute(&mut self, command: &str) -> Result<CommandOutput, AcquisitionError> {
        self.issued.push(command.to_string());
        if self.unreachable {
            return Err(AcquisitionError::Unreachable(
                "transcript marks device unreachable".into(),
            ));
        }
        Ok(self
            .responses
            .get(command)
            .cloned()
            .unwrap_or(CommandOutput {
                status: 127,
                stdout: Vec::new(),
                stderr: format!("{command}: not found").into_bytes(),
            }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub label: String,
    pub command: String,
    pub source_kind: SourceKind,
    pub volatility_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionPlan {
    #[serde(rename = "step")]
    steps: Vec<PlanStep>,
}

fn is_privileged(command: &str) -> bool {
    command.split_whitespace().any(|w| w == "su" || w == "sudo") || command.contains("/data/data")
}

impl AcquisitionPlan {
    /// Validates and sorts by volatility rank (stable for equal ranks).
    pub fn new(mut steps: Vec<PlanStep>) -> Result<Self, AcquisitionError> {
        if steps.is_empty() {
            return Err(AcquisitionError::InvalidPlan("no steps".into()));
        }
        let mut labels = BTreeSet::new();
        for s in &steps {
            if !labels.insert(s.label.as_str()) {
                return Err(AcquisitionError::InvalidPlan(format!(
                    "duplicate label {}",
                    s.label
                )));
            }
            if is_privileged(&s.command) {
                return Err(AcquisitionError::InvalidPlan(format!(
                    "step {} needs elevated privileges: {}",
                    s.label, s.command
                )));
            }
            if s.command.trim().is_empty() {
                return Err(AcquisitionError::InvalidPlan(format!(
                    "step {} has no command",
                    s.label
                )));
            }
        }
        steps.sort_by_key(|s| s.volatility_rank);
        Ok(AcquisitionPlan { steps })
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn from_toml(text: &str) -> Result<Self, AcquisitionError> {
        let raw: AcquisitionPlan =
            toml::from_str(text).map_err(|e| AcquisitionError::InvalidPlan(e.to_string()))?;
        Self::new(raw.steps)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}

pub fn default_plan() -> AcquisitionPlan {
    let step = |label: &str, command: &str, source_kind, rank| PlanStep {
        label: label.into(),
        command: command.into(),
        source_kind,
        volatility_rank: rank,
    };
    AcquisitionPlan::new(vec![
        step(
            "network_stack",
            "dumpsys network_stack",
            SourceKind::NetworkStack,
            0,
        ),
        step("netstats", "dumpsys netstats", SourceKind::Netstats, 1),
        step(
            "usagestats",
            "dumpsys usagestats",
            SourceKind::Usagestats,
            2,
        ),
        step(
            "getprop_release",
            "getprop ro.build.version.release",
            SourceKind::Getprop,
            3,
        ),
        step(
            "getprop_abi",
            "getprop ro.product.cpu.abi",
            SourceKind::Getprop,
            4,
        ),
        step(
            "getprop_model",
            "getprop ro.product.model",
            SourceKind::Getprop,
            5,
        ),
    ])
    .expect("default plan is valid")
}

/// A sealed bundle plus the raw bytes it describes, keyed by label.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub bundle: EvidenceBundle,
    pub payloads: BTreeMap<String, Vec<u8>>,
}

pub fn run_acquisition(
    executor: &mut dyn CommandExecutor,
    plan: &AcquisitionPlan,
    clock: &dyn Clock,
    origin_label: &str,
    hash_algorithm: HashAlgorithm,
) -> Result<Acquisition, AcquisitionError> {
    let probe = executor.execute(CLOCK_PROBE)?;
    let host_now = clock.now();
    let clock_offset_seconds = (probe.status == 0)
        .then(|| {
            String::from_utf8_lossy(&probe.stdout)
                .trim()
                .parse::<i64>()
                .ok()
        })
        .flatten()
        .map(|device| device - host_now.epoch_seconds());

    let mut captured: Vec<(EvidenceItem, Vec<u8>)> = Vec::new();
    let mut failures = Vec::new();
    let mut device = DeviceProfile {
        adb_host_name: origin_label.to_string(),
        ..Default::default()
    };
    for step in plan.steps() {
        let out = match executor.execute(&step.command) {
            Ok(out) => out,
            Err(e) => {
                failures.push(StepFailure {
                    label: step.label.clone(),
                    command: step.command.clone(),
                    exit_status: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if out.status != 0 {
            failures.push(StepFailure {
                label: step.label.clone(),
                command: step.command.clone(),
                exit_status: Some(out.status),
                message: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
            continue;
        }
        let collected_at = clock.now();
        if step.source_kind == SourceKind::Getprop {
            let value = String::from_utf8_lossy(&out.stdout).trim().to_string();
            if step.command.contains("ro.build.version.release") {
                device.android_version = value;
            } else if step.command.contains("ro.product.cpu.abi") {
                device.cpu_abi = value;
            } else if step.command.contains("ro.product.model") {
                device.model_number = value;
            }
        }
        let item = EvidenceItem::capture(
            step.label.clone(),
            step.source_kind,
            collected_at,
            origin_label,
            &out.stdout,
            hash_algorithm,
        );
        captured.push((item, out.stdout));
    }
    let pairs: Vec<(EvidenceItem, &[u8])> = captured
        .iter()
        .map(|(i, b)| (i.clone(), b.as_slice()))
        .collect();
    let bundle = seal_bundle_with(
        &pairs,
        Some(device),
        SealOptions {
            hash_algorithm,
            failures,
            clock_offset_seconds,
        },
    )?;
    let payloads = captured.into_iter().map(|(i, b)| (i.label, b)).collect();
    Ok(Acquisition { bundle, payloads })
}
