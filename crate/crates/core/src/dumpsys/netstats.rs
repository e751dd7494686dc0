//! `dumpsys netstats`
//!
//! Records are `st=<epoch> rb=<n> rp=<n> tb=<n> tp=<n>` lines following an
//! `ident=[{... networkId="<ssid>" ...}]` line. When the dump has an
//! `Xt stats:` section only that section is read, because the Dev and Uid
//! sections repeat the same traffic at other granularities.

use serde::{Deserialize, Serialize};

use super::{ensure_nonempty, is_json_lines, key_values, lookup, Parsed};
use crate::error::{ParseError, ParseWarning};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetUsageRecord {
    #[serde(alias = "networkId")]
    pub network_id: String,
    /// Bucket start exactly as printed.
    pub st: Timestamp,
    pub rb: u64,
    pub rp: u64,
    pub tb: u64,
    pub tp: u64,
}

impl NetUsageRecord {
    pub fn total_bytes(&self) -> u64 {
        self.rb + self.tb
    }
}

const STATS_SECTIONS: [&str; 4] = ["Dev stats:", "Xt stats:", "Uid stats:", "Uid tag stats:"];

/// Pulls the SSID out of an ident line. Handles both quoted and bare forms.
fn network_id_of(line: &str) -> Option<String> {
    let start = line.find("networkId=")? + "networkId=".len();
    let rest = &line[start..];
    if let Some(quoted) = rest.strip_prefix('"') {
        quoted.find('"').map(|end| quoted[..end].to_string())
    } else {
        let end = rest.find([',', '}', ' ', ']']).unwrap_or(rest.len());
        let id = &rest[..end];
        (!id.is_empty() && id != "null").then(|| id.to_string())
    }
}

fn record_from_line(line: &str, network_id: &str) -> Result<NetUsageRecord, String> {
    let kv = key_values(line);
    let num = |key: &str| -> Result<u64, String> {
        let v = lookup(&kv, key).ok_or_else(|| format!("missing {key}"))?;
        v.parse::<u64>()
            .map_err(|_| format!("bad {key} value {v:?}"))
    };
    let st = lookup(&kv, "st").ok_or("missing st")?;
    let st = st
        .parse::<i64>()
        .ok()
        .and_then(|s| Timestamp::from_epoch(s).ok())
        .ok_or_else(|| format!("bad st value {st:?}"))?;
    Ok(NetUsageRecord {
        network_id: network_id.to_string(),
        st,
        rb: num("rb")?,
        rp: num("rp")?,
        tb: num("tb")?,
        tp: num("tp")?,
    })
}

pub fn parse_netstats(text: &str) -> Result<Parsed<Vec<NetUsageRecord>>, ParseError> {
    ensure_nonempty(text)?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped = 0;

    if is_json_lines(text) {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            match serde_json::from_str::<NetUsageRecord>(line) {
                Ok(r) => records.push(r),
                Err(e) => warnings.push(ParseWarning::new(idx + 1, format!("bad JSON line: {e}"))),
            }
        }
        return Ok(Parsed {
            value: records,
            warnings,
            skipped_lines: skipped,
        });
    }

    let has_xt = text.lines().any(|l| l.trim() == "Xt stats:");
    // Without section headers everything is in scope.
    let mut in_scope = !has_xt;
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if STATS_SECTIONS.contains(&line) {
            in_scope = !has_xt || line == "Xt stats:";
            current = None;
            continue;
        }
        if !in_scope {
            skipped += 1;
            continue;
        }
        if line.starts_with("ident=") {
            current = network_id_of(line);
            if current.is_none() {
                warnings.push(ParseWarning::new(
                    lineno,
                    "ident without networkId; following records skipped",
                ));
            }
        } else if line.starts_with("st=") {
            match &current {
                Some(id) => match record_from_line(line, id) {
                    Ok(r) => records.push(r),
                    Err(msg) => warnings.push(ParseWarning::new(lineno, msg)),
                },
                None => warnings.push(ParseWarning::new(
                    lineno,
                    "record outside any networkId ident",
                )),
            }
        } else {
            skipped += 1;
        }
    }
    Ok(Parsed {
        value: records,
        warnings,
        skipped_lines: skipped,
    })
}
