//! Parsers for `dumpsys usagestats`, `dumpsys netstats` and
//! `dumpsys network_stack` text.
//!
//! The grammar is documented in `docs/fixture-grammar.md`. Each parser is
//! total: lines it does not understand are counted and skipped, lines that
//! look like records but fail to parse become [`ParseWarning`]s. Only an
//! empty (or whitespace-only) input is an error.
//!
//! All three also accept a JSON-lines form, selected when the first
//! non-blank line starts with `{`.

pub mod netstats;
pub mod network_stack;
pub mod usagestats;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, ParseWarning};

pub use netstats::{parse_netstats, NetUsageRecord};
pub use network_stack::{parse_network_stack, LeaseEvent, LeaseEventKind, NetworkStackLog};
pub use usagestats::{
    parse_usagestats, AggregateWindow, Precision, UsageAggregate, UsageEvent, UsageEventType,
    UsageReport,
};

/// Parser output plus whatever was skipped along the way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<ParseWarning>,
    /// Non-blank lines that matched no rule.
    pub skipped_lines: usize,
}

pub(crate) fn ensure_nonempty(text: &str) -> Result<(), ParseError> {
    if text.trim().is_empty() {
        Err(ParseError::EmptyInput)
    } else {
        Ok(())
    }
}

pub(crate) fn is_json_lines(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.starts_with('{'))
}

/// Splits `a=1 b="two words" c=x` into key/value pairs. Quoted values keep
/// their inner text; a token without `=` is returned with an empty key.
pub(crate) fn key_values(line: &str) -> Vec<(&str, String)> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'=' {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'=' {
            let key = &line[start..i];
            i += 1;
            if i < bytes.len() && bytes[i] == b'"' {
                i += 1;
                let vstart = i;
                while i < bytes.len() && bytes[i] != b'"' {
                    i += 1;
                }
                out.push((key, line[vstart..i].to_string()));
                i += 1;
            } else {
                let vstart = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((key, line[vstart..i].to_string()));
            }
        } else {
            out.push(("", line[start..i].to_string()));
        }
    }
    out
}

pub(crate) fn lookup<'a>(pairs: &'a [(&str, String)], key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.as_str())
}

/// Quotes a value for the fixture grammar when it contains whitespace.
pub(crate) fn quote(value: &str) -> String {
    format!("\"{value}\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_handles_quotes_and_bare_tokens() {
        let kv = key_values(
            r#"  time="2023-05-11 01:14:16" type=ACTIVITY_RESUMED package=com.corproxy.files loose"#,
        );
        assert_eq!(
            kv,
            vec![
                ("time", "2023-05-11 01:14:16".to_string()),
                ("type", "ACTIVITY_RESUMED".to_string()),
                ("package", "com.corproxy.files".to_string()),
                ("", "loose".to_string()),
            ]
        );
    }

    #[test]
    fn key_values_unterminated_quote_is_total() {
        let kv = key_values(r#"ssid="never closed"#);
        assert_eq!(kv, vec![("ssid", "never closed".to_string())]);
    }

    #[test]
    fn json_lines_detection() {
        assert!(is_json_lines("\n  {\"kind\":\"boot\"}"));
        assert!(!is_json_lines("Xt stats:\n{"));
    }
}
