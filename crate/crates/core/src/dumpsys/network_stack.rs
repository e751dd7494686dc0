//! `dumpsys network_stack`
//!
//! The log is wiped on reboot, so a `Boot time:` marker bounds what can be
//! trusted: lease lines older than the marker are dropped.
//!
//! Lease line shape:
//!
//! ```text
//! 2023-05-11T01:10:02.118 - [wlan0] DHCP_ACK ip=172.30.1.76/24 ssid="KT_GiGA_5G_EFB7"
//! ```

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{ensure_nonempty, is_json_lines, key_values, lookup, Parsed};
use crate::error::{ParseError, ParseWarning};
use crate::time::{DisplayZone, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LeaseEventKind {
    DhcpAck,
    LeaseRenew,
    InterfaceUp,
    InterfaceDown,
    Other(String),
}

impl LeaseEventKind {
    pub fn as_str(&self) -> &str {
        match self {
            LeaseEventKind::DhcpAck => "DHCP_ACK",
            LeaseEventKind::LeaseRenew => "LEASE_RENEW",
            LeaseEventKind::InterfaceUp => "INTERFACE_UP",
            LeaseEventKind::InterfaceDown => "INTERFACE_DOWN",
            LeaseEventKind::Other(raw) => raw,
        }
    }

    pub fn from_token(token: &str) -> Self {
        match token {
            "DHCP_ACK" => LeaseEventKind::DhcpAck,
            "LEASE_RENEW" => LeaseEventKind::LeaseRenew,
            "INTERFACE_UP" => LeaseEventKind::InterfaceUp,
            "INTERFACE_DOWN" => LeaseEventKind::InterfaceDown,
            other => LeaseEventKind::Other(other.to_string()),
        }
    }
}

impl fmt::Display for LeaseEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for LeaseEventKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LeaseEventKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(LeaseEventKind::from_token(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeaseEvent {
    pub at: Timestamp,
    pub interface: String,
    pub network_id: Option<String>,
    /// Dotted quad, validated.
    pub private_ip: String,
    pub event_kind: LeaseEventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStackLog {
    pub boot_epoch_marker: Option<Timestamp>,
    /// Ascending by `at`.
    pub leases: Vec<LeaseEvent>,
}

/// Canonical dotted-quad form, or `None` if not a valid IPv4 address.
/// A trailing `/prefix` is accepted and discarded.
pub fn normalize_ipv4(s: &str) -> Option<String> {
    let addr = s.split('/').next()?;
    addr.parse::<Ipv4Addr>().ok().map(|a| a.to_string())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum JsonLine {
    Boot { at: Timestamp },
    Lease(LeaseEvent),
}

fn lease_from_line(line: &str, zone: DisplayZone) -> Result<LeaseEvent, String> {
    let (time, rest) = line.split_once(" - ").ok_or("missing ' - ' separator")?;
    let at = zone.parse_local(time).map_err(|e| e.to_string())?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix('[').ok_or("missing [interface]")?;
    let (iface, rest) = rest.split_once(']').ok_or("unterminated [interface]")?;
    let kv = key_values(rest);
    let token = kv
        .iter()
        .find(|(k, _)| k.is_empty())
        .map(|(_, v)| v.as_str())
        .ok_or("missing event token")?;
    let ip = lookup(&kv, "ip").ok_or("lease line without ip")?;
    let private_ip = normalize_ipv4(ip).ok_or_else(|| format!("invalid IPv4 address {ip:?}"))?;
    Ok(LeaseEvent {
        at,
        interface: iface.trim().to_string(),
        network_id: lookup(&kv, "ssid").map(str::to_string),
        private_ip,
        event_kind: LeaseEventKind::from_token(token),
    })
}

fn looks_like_lease(line: &str) -> bool {
    line.len() > 10 && line.as_bytes()[..4].iter().all(u8::is_ascii_digit) && line.contains(" - ")
}

pub fn parse_network_stack(
    text: &str,
    zone: DisplayZone,
) -> Result<Parsed<NetworkStackLog>, ParseError> {
    ensure_nonempty(text)?;
    let mut log = NetworkStackLog::default();
    let mut warnings = Vec::new();
    let mut skipped = 0;
    let mut candidates: Vec<(usize, LeaseEvent)> = Vec::new();

    if is_json_lines(text) {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            match serde_json::from_str::<JsonLine>(line) {
                Ok(JsonLine::Boot { at }) => log.boot_epoch_marker = Some(at),
                Ok(JsonLine::Lease(mut l)) => match normalize_ipv4(&l.private_ip) {
                    Some(ip) => {
                        l.private_ip = ip;
                        candidates.push((idx + 1, l));
                    }
                    None => warnings.push(ParseWarning::new(
                        idx + 1,
                        format!("invalid IPv4 address {:?}", l.private_ip),
                    )),
                },
                Err(e) => warnings.push(ParseWarning::new(idx + 1, format!("bad JSON line: {e}"))),
            }
        }
    } else {
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(t) = line.strip_prefix("Boot time:") {
                match zone.parse_local(t) {
                    // Latest marker wins; the log only reflects the last boot.
                    Ok(at) => {
                        log.boot_epoch_marker =
                            Some(log.boot_epoch_marker.map_or(at, |b| b.max(at)))
                    }
                    Err(e) => {
                        warnings.push(ParseWarning::new(lineno, format!("bad boot marker: {e}")))
                    }
                }
            } else if looks_like_lease(line) {
                match lease_from_line(line, zone) {
                    Ok(l) => candidates.push((lineno, l)),
                    Err(msg) => warnings.push(ParseWarning::new(lineno, msg)),
                }
            } else {
                skipped += 1;
            }
        }
    }

    for (lineno, lease) in candidates {
        match log.boot_epoch_marker {
            Some(boot) if lease.at < boot => warnings.push(ParseWarning::new(
                lineno,
                format!(
                    "lease at {} predates boot marker {}, dropped",
                    lease.at, boot
                ),
            )),
            _ => log.leases.push(lease),
        }
    }
    log.leases.sort_by_key(|l| l.at);
    Ok(Parsed {
        value: log,
        warnings,
        skipped_lines: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Parsed<NetworkStackLog> {
        parse_network_stack(text, DisplayZone::default()).unwrap()
    }

    #[test]
    fn kt_dhcp_ack() {
        let p = parse("NetworkStack version:\nIpClient.wlan0\n  2023-05-11T01:10:02.118 - [wlan0] DHCP_ACK ip=172.30.1.76/24 ssid=\"KT_GiGA_5G_EFB7\"\n");
        assert!(p.warnings.is_empty());
        let l = &p.value.leases[0];
        assert_eq!(l.private_ip, "172.30.1.76");
        assert_eq!(l.network_id.as_deref(), Some("KT_GiGA_5G_EFB7"));
        assert_eq!(l.event_kind, LeaseEventKind::DhcpAck);
        assert_eq!(l.interface, "wlan0");
        assert_eq!(p.skipped_lines, 2);
    }

    #[test]
    fn outgoingowl_lease() {
        let p =
            parse("2023-05-11T21:05:40 - [wlan0] DHCP_ACK ip=192.162.35.52 ssid=\"outgoingowl\"\n");
        assert_eq!(p.value.leases[0].private_ip, "192.162.35.52");
    }

    #[test]
    fn fresh_reboot_has_no_leases() {
        let p = parse("NetworkStack version:\nBoot time: 2023-05-11 21:40:00\nIpClient.wlan0\n");
        assert_eq!(
            p.value.boot_epoch_marker.unwrap().epoch_seconds(),
            1_683_808_800
        );
        assert!(p.value.leases.is_empty());
    }

    #[test]
    fn pre_boot_leases_dropped() {
        let p = parse(
            "Boot time: 2023-05-11 12:00:00\n\
             2023-05-11T01:10:02 - [wlan0] DHCP_ACK ip=172.30.1.76\n\
             2023-05-11T13:00:00 - [wlan0] LEASE_RENEW ip=10.0.0.2\n",
        );
        assert_eq!(p.value.leases.len(), 1);
        assert_eq!(p.value.leases[0].event_kind, LeaseEventKind::LeaseRenew);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn invalid_ip_and_other_kind() {
        let p = parse(
            "2023-05-11T01:10:02 - [wlan0] DHCP_ACK ip=300.1.1.1\n\
             2023-05-11T01:11:00 - [wlan0] PROVISIONING_SUCCESS ip=10.1.2.3\n\
             2023-05-11T01:12:00 - wlan0 DHCP_ACK ip=10.1.2.3\n",
        );
        assert_eq!(p.value.leases.len(), 1);
        assert_eq!(
            p.value.leases[0].event_kind,
            LeaseEventKind::Other("PROVISIONING_SUCCESS".into())
        );
        assert_eq!(p.warnings.len(), 2);
    }

    #[test]
    fn json_lines_form() {
        let p = parse(
            "{\"kind\":\"boot\",\"at\":100}\n\
             {\"kind\":\"lease\",\"at\":50,\"interface\":\"wlan0\",\"network_id\":null,\"private_ip\":\"10.0.0.1\",\"event_kind\":\"DHCP_ACK\"}\n\
             {\"kind\":\"lease\",\"at\":150,\"interface\":\"wlan0\",\"network_id\":\"n\",\"private_ip\":\"10.0.0.2\",\"event_kind\":\"INTERFACE_UP\"}\n",
        );
        assert_eq!(p.value.leases.len(), 1);
        assert_eq!(p.value.leases[0].event_kind, LeaseEventKind::InterfaceUp);
    }

    #[test]
    fn ipv4_normalization() {
        assert_eq!(
            normalize_ipv4("192.162.35.52/24").as_deref(),
            Some("192.162.35.52")
        );
        assert_eq!(normalize_ipv4("1.2.3"), None);
        assert_eq!(normalize_ipv4("::1"), None);
    }
}
