//! FileZilla `filezilla.xml`, `recentservers.xml` and `sitemanager.xml`.
//!
//! Only the stable `Host`, `Port`, `Protocol` and `User` children of each
//! `Server` / `LastServer` element are read.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dumpsys::Parsed;
use crate::error::{ParseError, ParseWarning};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FtpProtocol {
    Ftp,
    Sftp,
    Ftps,
    Other(String),
}

impl FtpProtocol {
    /// FileZilla's numeric `Protocol` value.
    pub fn from_filezilla_code(code: &str) -> Self {
        match code.trim() {
            "0" | "6" => FtpProtocol::Ftp,
            "1" => FtpProtocol::Sftp,
            "3" | "4" => FtpProtocol::Ftps,
            other => FtpProtocol::Other(other.to_string()),
        }
    }

    pub fn filezilla_code(&self) -> &str {
        match self {
            FtpProtocol::Ftp => "0",
            FtpProtocol::Sftp => "1",
            FtpProtocol::Ftps => "4",
            FtpProtocol::Other(raw) => raw,
        }
    }

    pub fn default_port(&self) -> u16 {
        match self {
            FtpProtocol::Sftp => 22,
            _ => 21,
        }
    }

    fn label(&self) -> &str {
        match self {
            FtpProtocol::Ftp => "ftp",
            FtpProtocol::Sftp => "sftp",
            FtpProtocol::Ftps => "ftps",
            FtpProtocol::Other(raw) => raw,
        }
    }
}

impl fmt::Display for FtpProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for FtpProtocol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FtpProtocol::Other(raw) => s.serialize_str(&format!("other:{raw}")),
            p => s.serialize_str(p.label()),
        }
    }
}

impl<'de> Deserialize<'de> for FtpProtocol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "ftp" => FtpProtocol::Ftp,
            "sftp" => FtpProtocol::Sftp,
            "ftps" => FtpProtocol::Ftps,
            other => FtpProtocol::Other(other.strip_prefix("other:").unwrap_or(other).to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtpSourceFile {
    FilezillaXml,
    RecentserversXml,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FtpServerEntry {
    pub host: String,
    pub port: u16,
    pub protocol: FtpProtocol,
    pub user: Option<String>,
    pub source_file: FtpSourceFile,
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
        .and_then(|c| c.text())
        .map(str::trim)
}

pub fn parse_filezilla(xml_text: &str) -> Result<Parsed<Vec<FtpServerEntry>>, ParseError> {
    let doc = roxmltree::Document::parse(xml_text)?;
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for node in doc
        .descendants()
        .filter(|n| n.is_element() && matches!(n.tag_name().name(), "Server" | "LastServer"))
    {
        let line = doc.text_pos_at(node.range().start).row as usize;
        let Some(host) = child_text(node, "Host").filter(|h| !h.is_empty()) else {
            warnings.push(ParseWarning::new(
                line,
                "server element without Host, skipped",
            ));
            continue;
        };
        let protocol = child_text(node, "Protocol")
            .map(FtpProtocol::from_filezilla_code)
            .unwrap_or(FtpProtocol::Ftp);
        let port = match child_text(node, "Port") {
            None | Some("") => protocol.default_port(),
            Some(p) => match p.parse::<u16>() {
                Ok(p) if p != 0 => p,
                _ => {
                    warnings.push(ParseWarning::new(
                        line,
                        format!("invalid port {p:?}, skipped"),
                    ));
                    continue;
                }
            },
        };
        let in_recent = node
            .ancestors()
            .any(|a| a.is_element() && a.tag_name().name() == "RecentServers");
        entries.push(FtpServerEntry {
            host: host.to_string(),
            port,
            protocol,
            user: child_text(node, "User")
                .filter(|u| !u.is_empty())
                .map(str::to_string),
            source_file: if in_recent {
                FtpSourceFile::RecentserversXml
            } else {
                FtpSourceFile::FilezillaXml
            },
        });
    }
    Ok(Parsed {
        value: entries,
        warnings,
        skipped_lines: 0,
    })
}
