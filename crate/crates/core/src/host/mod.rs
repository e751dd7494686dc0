//! PC-side corroborating artifacts.

pub mod filezilla;
pub mod known_hosts;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ParseWarning;
use crate::evidence::{EvidenceItem, HashAlgorithm, SourceKind};
use crate::time::Timestamp;

pub use filezilla::{parse_filezilla, FtpProtocol, FtpServerEntry, FtpSourceFile};
pub use known_hosts::{hash_host_pattern, parse_known_hosts, resolve_hashed, KnownHostEntry};

/// Where to look under a user profile directory. Windows layout by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostArtifactPaths {
    pub filezilla_xml: PathBuf,
    pub recentservers_xml: PathBuf,
    pub known_hosts: PathBuf,
}

impl Default for HostArtifactPaths {
    fn default() -> Self {
        HostArtifactPaths {
            filezilla_xml: PathBuf::from("AppData/Roaming/FileZilla/filezilla.xml"),
            recentservers_xml: PathBuf::from("AppData/Roaming/FileZilla/recentservers.xml"),
            known_hosts: PathBuf::from(".ssh/known_hosts"),
        }
    }
}

/// Parsed host artifacts plus the evidence items describing the files read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostArtifacts {
    pub ftp_entries: Vec<FtpServerEntry>,
    pub known_hosts: Vec<KnownHostEntry>,
    pub items: Vec<EvidenceItem>,
    pub warnings: Vec<FileWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileWarning {
    pub file: String,
    #[serde(flatten)]
    pub warning: ParseWarning,
}

impl HostArtifacts {
    /// Items of the given kinds, for report citations.
    pub fn items_of(&self, kinds: &[SourceKind]) -> Vec<&EvidenceItem> {
        self.items
            .iter()
            .filter(|i| kinds.contains(&i.source_kind))
            .collect()
    }
}

#[derive(Debug)]
pub struct FileError {
    pub path: PathBuf,
    pub message: String,
}

/// Reads whatever artifacts exist under `dir`. Each file is looked up at
/// the profile-relative path first, then by bare file name directly in
/// `dir`. Absent files are not errors; unreadable or unparseable ones are
/// returned in the error list and the rest still load.
pub fn load_host_artifacts(
    dir: &Path,
    paths: &HostArtifactPaths,
    collected_at: Timestamp,
    origin_label: &str,
) -> (HostArtifacts, Vec<FileError>) {
    let mut out = HostArtifacts::default();
    let mut errors = Vec::new();
    let lookups = [
        (&paths.filezilla_xml, SourceKind::FilezillaXml),
        (&paths.recentservers_xml, SourceKind::RecentserversXml),
        (&paths.known_hosts, SourceKind::KnownHosts),
    ];
    for (rel, kind) in lookups {
        let candidates = [
            dir.join(rel),
            dir.join(rel.file_name().unwrap_or(rel.as_os_str())),
        ];
        let Some(path) = candidates.into_iter().find(|p| p.is_file()) else {
            continue;
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                errors.push(FileError {
                    path,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let file = path.display().to_string();
        let text = String::from_utf8_lossy(&bytes);
        let parsed = match kind {
            SourceKind::KnownHosts => {
                let p = parse_known_hosts(&text);
                out.known_hosts.extend(p.value);
                Ok(p.warnings)
            }
            _ => parse_filezilla(&text).map(|p| {
                out.ftp_entries.extend(p.value);
                p.warnings
            }),
        };
        match parsed {
            Ok(warnings) => {
                out.warnings
                    .extend(warnings.into_iter().map(|warning| FileWarning {
                        file: file.clone(),
                        warning,
                    }));
                let label = rel
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                out.items.push(EvidenceItem::capture(
                    label,
                    kind,
                    collected_at,
                    origin_label,
                    &bytes,
                    HashAlgorithm::default(),
                ));
            }
            Err(e) => errors.push(FileError {
                path,
                message: e.to_string(),
            }),
        }
    }
    (out, errors)
}
