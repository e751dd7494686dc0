//! Watch-only app policy: flags phone apps sideloaded onto a watch and APKs
//! whose native code the watch CPU cannot run.
//!
//! A manifest without `android.hardware.type.watch` is a heuristic signal,
//! not proof. ABI compatibility knows the ARM family only.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::evidence::DeviceProfile;

pub const WATCH_FEATURE: &str = "android.hardware.type.watch";

const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub package: String,
    pub uses_features: Vec<String>,
    /// Empty means no native code, i.e. runs anywhere.
    #[serde(default)]
    pub declared_abis: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Unknown,
    SideloadedPhoneApp,
    AbiIncompatible,
}

impl Verdict {
    /// Higher is worse.
    pub fn severity(self) -> u8 {
        match self {
            Verdict::Compliant => 0,
            Verdict::Unknown => 1,
            Verdict::SideloadedPhoneApp => 2,
            Verdict::AbiIncompatible => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Compliant => "compliant",
            Verdict::Unknown => "unknown",
            Verdict::SideloadedPhoneApp => "sideloaded_phone_app",
            Verdict::AbiIncompatible => "abi_incompatible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyVerdict {
    pub package: String,
    pub watch_feature_present: bool,
    pub abi_compatible: Option<bool>,
    pub verdict: Verdict,
    pub rationale: String,
}

/// Parses a decoded `AndroidManifest.xml` or `aapt dump badging` output.
pub fn parse_manifest(text: &str) -> Result<ManifestInfo, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    if text.trim_start().starts_with('<') {
        parse_manifest_xml(text)
    } else {
        parse_aapt_badging(text)
    }
}

fn parse_manifest_xml(text: &str) -> Result<ManifestInfo, ParseError> {
    let doc = roxmltree::Document::parse(text)?;
    let root = doc.root_element();
    let package = root
        .attribute("package")
        .filter(|p| !p.is_empty())
        .ok_or(ParseError::MissingPackage)?;
    let uses_features = root
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "uses-feature")
        .filter_map(|n| {
            n.attribute((ANDROID_NS, "name"))
                .or_else(|| n.attribute("name"))
        })
        .map(str::to_string)
        .collect();
    Ok(ManifestInfo {
        package: package.to_string(),
        uses_features,
        declared_abis: Vec::new(),
    })
}

/// Values of `key='value'` pairs on an aapt line.
fn quoted_values(s: &str) -> Vec<&str> {
    s.split('\'').skip(1).step_by(2).collect()
}

fn parse_aapt_badging(text: &str) -> Result<ManifestInfo, ParseError> {
    let mut package = None;
    let mut uses_features = Vec::new();
    let mut declared_abis = Vec::new();
    for line in text.lines().map(str::trim) {
        if let Some(rest) = line.strip_prefix("package:") {
            package = rest
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix("name="))
                .map(|v| v.trim_matches('\'').to_string());
        } else if let Some(rest) = line.strip_prefix("uses-feature:") {
            if let Some(name) = quoted_values(rest).first() {
                uses_features.push(name.to_string());
            }
        } else if let Some(rest) = line.strip_prefix("native-code:") {
            declared_abis.extend(quoted_values(rest).into_iter().map(str::to_string));
        }
    }
    let package = package
        .filter(|p| !p.is_empty())
        .ok_or(ParseError::MissingPackage)?;
    Ok(ManifestInfo {
        package,
        uses_features,
        declared_abis,
    })
}

pub fn check_watch_policy(info: &ManifestInfo) -> PolicyVerdict {
    let present = info.uses_features.iter().any(|f| f == WATCH_FEATURE);
    PolicyVerdict {
        package: info.package.clone(),
        watch_feature_present: present,
        abi_compatible: None,
        verdict: if present {
            Verdict::Compliant
        } else {
            Verdict::SideloadedPhoneApp
        },
        rationale: if present {
            format!("declares {WATCH_FEATURE}")
        } else {
            format!("no {WATCH_FEATURE} uses-feature; likely a phone app installed on the watch")
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbiCheck {
    pub compatible: bool,
    pub warnings: Vec<String>,
}

const KNOWN_ABIS: [&str; 3] = ["armeabi", "armeabi-v7a", "arm64-v8a"];

/// ABIs a device with primary ABI `device_abi` can execute.
fn executable_by(device_abi: &str) -> &'static [&'static str] {
    match device_abi {
        "armeabi" => &["armeabi"],
        "armeabi-v7a" => &["armeabi-v7a", "armeabi"],
        "arm64-v8a" => &["arm64-v8a", "armeabi-v7a", "armeabi"],
        _ => &[],
    }
}

pub fn check_abi(apk_abis: &[String], device_abi: &str) -> AbiCheck {
    let mut warnings = Vec::new();
    if !KNOWN_ABIS.contains(&device_abi) {
        warnings.push(format!("unknown device ABI {device_abi:?}"));
    }
    for abi in apk_abis
        .iter()
        .filter(|a| !KNOWN_ABIS.contains(&a.as_str()))
    {
        warnings.push(format!("unknown APK ABI {abi:?}"));
    }
    let runnable = executable_by(device_abi);
    let compatible = apk_abis.is_empty()
        || apk_abis
            .iter()
            .any(|a| a == device_abi || runnable.contains(&a.as_str()));
    AbiCheck {
        compatible,
        warnings,
    }
}

/// Combines the feature and ABI dimensions into one verdict.
pub fn combine(
    feature: PolicyVerdict,
    abi: Option<&AbiCheck>,
    apk_abis: &[String],
    device_abi: &str,
) -> PolicyVerdict {
    let abi_compatible = abi.map(|a| a.compatible);
    let (verdict, rationale) = match (feature.watch_feature_present, abi_compatible) {
        (_, Some(false)) => (
            Verdict::AbiIncompatible,
            format!("native code {apk_abis:?} cannot run on {device_abi}"),
        ),
        (false, _) => (Verdict::SideloadedPhoneApp, feature.rationale),
        (true, Some(true)) => (Verdict::Compliant, feature.rationale),
        (true, None) => (
            Verdict::Unknown,
            format!("{}; device ABI unknown", feature.rationale),
        ),
    };
    PolicyVerdict {
        abi_compatible,
        verdict,
        rationale,
        ..feature
    }
}

/// One verdict per manifest, most severe first, then by package.
pub fn audit_inventory(manifests: &[ManifestInfo], device: &DeviceProfile) -> Vec<PolicyVerdict> {
    let device_abi = device.cpu_abi.trim();
    let mut out: Vec<PolicyVerdict> = manifests
        .iter()
        .map(|m| {
            let feature = check_watch_policy(m);
            let abi = (!device_abi.is_empty()).then(|| check_abi(&m.declared_abis, device_abi));
            combine(feature, abi.as_ref(), &m.declared_abis, device_abi)
        })
        .collect();
    out.sort_by(|a, b| {
        b.verdict
            .severity()
            .cmp(&a.verdict.severity())
            .then_with(|| a.package.cmp(&b.package))
    });
    out
}

#[derive(Debug)]
pub struct InventoryError {
    pub path: PathBuf,
    pub message: String,
}

/// Loads an inventory from a JSON list of [`ManifestInfo`] or from a
/// directory of manifest files (`.xml` or aapt dumps `.txt`).
pub fn load_inventory(path: &Path) -> (Vec<ManifestInfo>, Vec<InventoryError>) {
    let mut manifests = Vec::new();
    let mut errors = Vec::new();
    let err = |path: &Path, message: String| InventoryError {
        path: path.to_path_buf(),
        message,
    };
    if path.is_dir() {
        let mut files: Vec<PathBuf> = match fs::read_dir(path) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect(),
            Err(e) => return (manifests, vec![err(path, e.to_string())]),
        };
        files.sort();
        for file in files {
            match fs::read_to_string(&file)
                .map_err(|e| e.to_string())
                .and_then(|t| {
                    if file.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str::<Vec<ManifestInfo>>(&t).map_err(|e| e.to_string())
                    } else {
                        parse_manifest(&t)
                            .map(|m| vec![m])
                            .map_err(|e| e.to_string())
                    }
                }) {
                Ok(ms) => manifests.extend(ms),
                Err(m) => errors.push(err(&file, m)),
            }
        }
    } else {
        match fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Vec<ManifestInfo>>(&t).map_err(|e| e.to_string()))
        {
            Ok(ms) => manifests = ms,
            Err(m) => errors.push(err(path, m)),
        }
    }
    (manifests, errors)
}

/// Fixed-width text table, one row per verdict.
pub fn render_verdict_table(verdicts: &[PolicyVerdict]) -> String {
    let pkg_w = verdicts
        .iter()
        .map(|v| v.package.len())
        .max()
        .unwrap_or(0)
        .max("PACKAGE".len());
    let mut out = format!(
        "{:<pkg_w$}  {:<20}  {:<5}  {:<5}  RATIONALE\n",
        "PACKAGE", "VERDICT", "WATCH", "ABI"
    );
    for v in verdicts {
        let abi = match v.abi_compatible {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "?",
        };
        out.push_str(&format!(
            "{:<pkg_w$}  {:<20}  {:<5}  {:<5}  {}\n",
            v.package,
            v.verdict.to_string(),
            if v.watch_feature_present { "yes" } else { "no" },
            abi,
            v.rationale
        ));
    }
    out
}
