//! OpenSSH `known_hosts`.
//!
//! Only plaintext patterns take part in IP matching. Hashed entries
//! (`|1|salt|hmac`) can be tested against a candidate host with
//! [`KnownHostEntry::hashed_matches`], which recomputes the HMAC-SHA1.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256};

use crate::dumpsys::Parsed;
use crate::error::ParseWarning;

pub const HASHED_SENTINEL: &str = "|1|";
pub const DEFAULT_SSH_PORT: u16 = 22;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnownHostEntry {
    /// As written: `host`, `[host]:port`, or `|1|salt|hash`.
    pub host_pattern: String,
    pub port: u16,
    pub key_type: String,
    /// SHA-256 of the decoded public key blob.
    pub key_blob_digest: String,
    pub hashed: bool,
    /// `@cert-authority` / `@revoked`, when present.
    pub marker: Option<String>,
}

impl KnownHostEntry {
    /// Plaintext host with brackets and port removed. `None` for hashed entries.
    pub fn host(&self) -> Option<&str> {
        if self.hashed {
            return None;
        }
        match split_bracketed(&self.host_pattern) {
            Some((host, _)) => Some(host),
            None => Some(&self.host_pattern),
        }
    }

    /// Exact plaintext comparison. Hashed entries never match.
    pub fn matches_ip(&self, ip: &str) -> bool {
        self.host() == Some(ip)
    }

    /// Checks a hashed entry against `host` on `port` the way ssh does.
    pub fn hashed_matches(&self, host: &str, port: u16) -> bool {
        if !self.hashed {
            return false;
        }
        let Some(rest) = self.host_pattern.strip_prefix(HASHED_SENTINEL) else {
            return false;
        };
        let Some((salt_b64, hash_b64)) = rest.split_once('|') else {
            return false;
        };
        let (Ok(salt), Ok(expected)) = (STANDARD.decode(salt_b64), STANDARD.decode(hash_b64))
        else {
            return false;
        };
        let Ok(mut mac) = Hmac::<Sha1>::new_from_slice(&salt) else {
            return false;
        };
        mac.update(hashed_input(host, port).as_bytes());
        mac.verify_slice(&expected).is_ok()
    }
}

fn hashed_input(host: &str, port: u16) -> String {
    if port == DEFAULT_SSH_PORT {
        host.to_string()
    } else {
        format!("[{host}]:{port}")
    }
}

/// Produces the `|1|salt|hash` pattern ssh-keygen -H would write.
pub fn hash_host_pattern(host: &str, port: u16, salt: &[u8]) -> String {
    let mut mac = Hmac::<Sha1>::new_from_slice(salt).expect("HMAC accepts any key length");
    mac.update(hashed_input(host, port).as_bytes());
    format!(
        "{HASHED_SENTINEL}{}|{}",
        STANDARD.encode(salt),
        STANDARD.encode(mac.finalize().into_bytes())
    )
}

/// Finds which hashed entries correspond to any of `candidates`
/// (host, port). Returns `(entry index, candidate index)` pairs.
pub fn resolve_hashed(
    entries: &[KnownHostEntry],
    candidates: &[(String, u16)],
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ei, e) in entries.iter().enumerate().filter(|(_, e)| e.hashed) {
        for (ci, (host, port)) in candidates.iter().enumerate() {
            if e.hashed_matches(host, *port) {
                out.push((ei, ci));
            }
        }
    }
    out
}

fn split_bracketed(pattern: &str) -> Option<(&str, &str)> {
    let inner = pattern.strip_prefix('[')?;
    let (host, rest) = inner.split_once(']')?;
    Some((host, rest.strip_prefix(':')?))
}

pub fn parse_known_hosts(text: &str) -> Parsed<Vec<KnownHostEntry>> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace().peekable();
        let marker = fields.next_if(|f| f.starts_with('@')).map(str::to_string);
        let (Some(hosts), Some(key_type), Some(key)) =
            (fields.next(), fields.next(), fields.next())
        else {
            warnings.push(ParseWarning::new(lineno, "expected: hosts keytype key"));
            continue;
        };
        let blob = match STANDARD.decode(key) {
            Ok(b) => b,
            Err(_) => {
                warnings.push(ParseWarning::new(lineno, "key is not valid base64"));
                continue;
            }
        };
        let key_blob_digest = hex::encode(Sha256::digest(&blob));
        for pattern in hosts.split(',').filter(|p| !p.is_empty()) {
            let hashed = pattern.starts_with(HASHED_SENTINEL);
            let port = if hashed {
                DEFAULT_SSH_PORT
            } else if pattern.starts_with('[') {
                match split_bracketed(pattern)
                    .and_then(|(_, p)| p.parse::<u16>().ok())
                    .filter(|p| *p != 0)
                {
                    Some(p) => p,
                    None => {
                        warnings.push(ParseWarning::new(
                            lineno,
                            format!("bad bracketed host {pattern:?}"),
                        ));
                        continue;
                    }
                }
            } else {
                DEFAULT_SSH_PORT
            };
            entries.push(KnownHostEntry {
                host_pattern: pattern.to_string(),
                port,
                key_type: key_type.to_string(),
                key_blob_digest: key_blob_digest.clone(),
                hashed,
                marker: marker.clone(),
            });
        }
    }
    Parsed {
        value: entries,
        warnings,
        skipped_lines: 0,
    }
}
