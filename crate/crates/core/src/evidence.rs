//! Evidence items and the sealed bundle manifest.
//!
//! A bundle lists every collected artifact together with the digest of its
//! exact stored bytes. The manifest digest is computed over the canonical
//! JSON form of the bundle (sorted keys, compact), so any implementation that
//! reproduces the same canonical bytes gets the same digest.
//!
//! On disk a bundle is a directory:
//!
//! ```text
//! <bundle>/manifest.json      canonical JSON, includes bundle_manifest_digest
//! <bundle>/raw/<label>        verbatim bytes of each item
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};

use crate::error::EvidenceError;
use crate::time::Timestamp;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RAW_DIR: &str = "raw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Usagestats,
    Netstats,
    NetworkStack,
    Getprop,
    FilezillaXml,
    RecentserversXml,
    KnownHosts,
    ManifestXml,
    AppInventory,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Usagestats => "usagestats",
            SourceKind::Netstats => "netstats",
            SourceKind::NetworkStack => "network_stack",
            SourceKind::Getprop => "getprop",
            SourceKind::FilezillaXml => "filezilla_xml",
            SourceKind::RecentserversXml => "recentservers_xml",
            SourceKind::KnownHosts => "known_hosts",
            SourceKind::ManifestXml => "manifest_xml",
            SourceKind::AppInventory => "app_inventory",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
    Sha512,
}

impl HashAlgorithm {
    pub fn digest_hex(self, bytes: &[u8]) -> String {
        match self {
            HashAlgorithm::Sha256 => hex::encode(Sha256::digest(bytes)),
            HashAlgorithm::Sha512 => hex::encode(Sha512::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub model_number: String,
    pub android_version: String,
    pub wear_os_version: String,
    pub cpu_abi: String,
    pub adb_host_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    /// Step label; also the file name under `raw/`.
    pub label: String,
    pub source_kind: SourceKind,
    pub collected_at: Timestamp,
    pub raw_bytes_digest: String,
    pub origin_label: String,
}

impl EvidenceItem {
    /// Hashes `bytes` and builds the item describing them.
    pub fn capture(
        label: impl Into<String>,
        source_kind: SourceKind,
        collected_at: Timestamp,
        origin_label: impl Into<String>,
        bytes: &[u8],
        algorithm: HashAlgorithm,
    ) -> Self {
        EvidenceItem {
            label: label.into(),
            source_kind,
            collected_at,
            raw_bytes_digest: algorithm.digest_hex(bytes),
            origin_label: origin_label.into(),
        }
    }
}

/// A step that ran but did not yield evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub label: String,
    pub command: String,
    pub exit_status: Option<i32>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SealOptions {
    pub hash_algorithm: HashAlgorithm,
    pub failures: Vec<StepFailure>,
    /// Device clock minus host clock, seconds.
    pub clock_offset_seconds: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub hash_algorithm: HashAlgorithm,
    pub items: Vec<EvidenceItem>,
    pub device: Option<DeviceProfile>,
    pub failures: Vec<StepFailure>,
    pub clock_offset_seconds: Option<i64>,
    pub bundle_manifest_digest: String,
}

/// Everything in the manifest except its own digest.
#[derive(Serialize)]
struct ManifestBody<'a> {
    hash_algorithm: HashAlgorithm,
    items: &'a [EvidenceItem],
    device: &'a Option<DeviceProfile>,
    failures: &'a [StepFailure],
    clock_offset_seconds: Option<i64>,
}

/// Serializes with sorted object keys and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    // serde_json::Value uses a BTreeMap for objects, so keys come out sorted.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label != "."
        && label != ".."
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl EvidenceBundle {
    pub fn compute_manifest_digest(&self) -> String {
        let body = ManifestBody {
            hash_algorithm: self.hash_algorithm,
            items: &self.items,
            device: &self.device,
            failures: &self.failures,
            clock_offset_seconds: self.clock_offset_seconds,
        };
        let json = canonical_json(&body).expect("manifest body is always serializable");
        self.hash_algorithm.digest_hex(json.as_bytes())
    }

    pub fn item(&self, label: &str) -> Option<&EvidenceItem> {
        self.items.iter().find(|i| i.label == label)
    }

    /// First item of the given kind, in listed order.
    pub fn item_of_kind(&self, kind: SourceKind) -> Option<&EvidenceItem> {
        self.items.iter().find(|i| i.source_kind == kind)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self).expect("bundle is always serializable")
    }

    /// Writes `manifest.json` and every payload under `raw/`.
    pub fn write_dir(
        &self,
        dir: &Path,
        payloads: &BTreeMap<String, Vec<u8>>,
    ) -> Result<(), EvidenceError> {
        let raw = dir.join(RAW_DIR);
        fs::create_dir_all(&raw).map_err(|source| EvidenceError::Io {
            path: raw.clone(),
            source,
        })?;
        for item in &self.items {
            if let Some(bytes) = payloads.get(&item.label) {
                let path = raw.join(&item.label);
                fs::write(&path, bytes).map_err(|source| EvidenceError::Io { path, source })?;
            }
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_canonical_json())
            .map_err(|source| EvidenceError::Io { path, source })
    }

    /// Loads a bundle directory. Items whose raw file is absent are simply
    /// missing from the returned map; [`verify_bundle`] reports them.
    pub fn read_dir(
        dir: &Path,
    ) -> Result<(EvidenceBundle, BTreeMap<String, Vec<u8>>), EvidenceError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| EvidenceError::Io {
            path: path.clone(),
            source,
        })?;
        let bundle: EvidenceBundle = serde_json::from_str(&text)?;
        let mut stored = BTreeMap::new();
        for item in &bundle.items {
            if !valid_label(&item.label) {
                return Err(EvidenceError::InvalidLabel(item.label.clone()));
            }
            let p = dir.join(RAW_DIR).join(&item.label);
            match fs::read(&p) {
                Ok(bytes) => {
                    stored.insert(item.label.clone(), bytes);
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => return Err(EvidenceError::Io { path: p, source }),
            }
        }
        Ok((bundle, stored))
    }
}

pub fn raw_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(RAW_DIR).join(label)
}

pub fn seal_bundle(
    items: &[(EvidenceItem, &[u8])],
    device: Option<DeviceProfile>,
) -> Result<EvidenceBundle, EvidenceError> {
    seal_bundle_with(items, device, SealOptions::default())
}

pub fn seal_bundle_with(
    items: &[(EvidenceItem, &[u8])],
    device: Option<DeviceProfile>,
    options: SealOptions,
) -> Result<EvidenceBundle, EvidenceError> {
    if items.is_empty() {
        return Err(EvidenceError::EmptyBundle);
    }
    let mut seen = BTreeSet::new();
    for (item, bytes) in items {
        if !valid_label(&item.label) {
            return Err(EvidenceError::InvalidLabel(item.label.clone()));
        }
        let computed = options.hash_algorithm.digest_hex(bytes);
        if computed != item.raw_bytes_digest {
            return Err(EvidenceError::DigestMismatch {
                label: item.label.clone(),
                recorded: item.raw_bytes_digest.clone(),
                computed,
            });
        }
        let key = (
            item.origin_label.as_str(),
            item.collected_at,
            item.source_kind,
            item.label.as_str(),
        );
        if !seen.insert(key) {
            return Err(EvidenceError::DuplicateSource {
                source_kind: item.source_kind.to_string(),
                label: item.label.clone(),
                origin: item.origin_label.clone(),
                collected_at: item.collected_at.epoch_seconds(),
            });
        }
    }
    let mut bundle = EvidenceBundle {
        hash_algorithm: options.hash_algorithm,
        items: items.iter().map(|(i, _)| i.clone()).collect(),
        device,
        failures: options.failures,
        clock_offset_seconds: options.clock_offset_seconds,
        bundle_manifest_digest: String::new(),
    };
    bundle.bundle_manifest_digest = bundle.compute_manifest_digest();
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ItemStatus {
    Pass,
    DigestMismatch { computed: String },
    MissingBytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCheck {
    pub label: String,
    pub source_kind: SourceKind,
    #[serde(flatten)]
    pub status: ItemStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub items: Vec<ItemCheck>,
    pub manifest_digest_ok: bool,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failed_labels(&self) -> Vec<&str> {
        self.items
            .iter()
            .filter(|c| c.status != ItemStatus::Pass)
            .map(|c| c.label.as_str())
            .collect()
    }
}

/// Re-hashes every stored payload against the manifest. `stored` is keyed
/// by item label.
pub fn verify_bundle(
    bundle: &EvidenceBundle,
    stored: &BTreeMap<String, Vec<u8>>,
) -> VerificationReport {
    let items: Vec<ItemCheck> = bundle
        .items
        .iter()
        .map(|item| {
            let status = match stored.get(&item.label) {
                None => ItemStatus::MissingBytes,
                Some(bytes) => {
                    let computed = bundle.hash_algorithm.digest_hex(bytes);
                    if computed == item.raw_bytes_digest {
                        ItemStatus::Pass
                    } else {
                        ItemStatus::DigestMismatch { computed }
                    }
                }
            };
            ItemCheck {
                label: item.label.clone(),
                source_kind: item.source_kind,
                status,
            }
        })
        .collect();
    let manifest_digest_ok = bundle.compute_manifest_digest() == bundle.bundle_manifest_digest;
    let passed = manifest_digest_ok && items.iter().all(|c| c.status == ItemStatus::Pass);
    VerificationReport {
        items,
        manifest_digest_ok,
        passed,
    }
}
