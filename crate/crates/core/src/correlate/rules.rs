use std::path::Path;

use serde::{Deserialize, Serialize};
use wildmatch::WildMatch;

use super::sessions::AppNetworkSession;
use super::Pattern;
use crate::error::ConfigError;

pub const DEFAULT_UNCLASSIFIED_MIN_BYTES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionBias {
    InboundHeavy,
    OutboundHeavy,
    #[default]
    Any,
}

impl DirectionBias {
    fn holds(self, bytes_in: u64, bytes_out: u64) -> bool {
        match self {
            DirectionBias::Any => true,
            DirectionBias::InboundHeavy => bytes_in >= bytes_out,
            DirectionBias::OutboundHeavy => bytes_out >= bytes_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRule {
    pub pattern: Pattern,
    pub package_markers: Vec<String>,
    #[serde(default)]
    pub direction_bias: DirectionBias,
    #[serde(default)]
    pub min_bytes: u64,
}

impl PatternRule {
    fn new(pattern: Pattern, marker: &str) -> Self {
        PatternRule {
            pattern,
            package_markers: vec![marker.to_string()],
            direction_bias: DirectionBias::Any,
            min_bytes: 0,
        }
    }

    /// The first candidate package matching one of the markers.
    pub fn matching_package<'a>(&self, candidates: &[&'a str]) -> Option<&'a str> {
        let globs: Vec<WildMatch> = self
            .package_markers
            .iter()
            .map(|m| WildMatch::new(m))
            .collect();
        candidates
            .iter()
            .copied()
            .find(|p| globs.iter().any(|g| g.matches(p)))
    }
}

/// Ordered rules; the first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(rename = "rule", default)]
    pub rules: Vec<PatternRule>,
    #[serde(default = "default_unclassified")]
    pub unclassified_min_bytes: u64,
}

fn default_unclassified() -> u64 {
    DEFAULT_UNCLASSIFIED_MIN_BYTES
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            rules: vec![
                PatternRule::new(Pattern::FtpServerExfil, "com.corproxy.files"),
                PatternRule::new(Pattern::SftpServerExfil, "net.xnano.android.sshserver"),
                PatternRule::new(Pattern::HiddenCameraControl, "com.view.ppcs"),
            ],
            unclassified_min_bytes: DEFAULT_UNCLASSIFIED_MIN_BYTES,
        }
    }
}

impl RuleSet {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let set: RuleSet = toml::from_str(text)?;
        if set.rules.iter().any(|r| r.package_markers.is_empty()) {
            return Err(ConfigError::Invalid("rule without package_markers".into()));
        }
        if set
            .rules
            .iter()
            .any(|r| r.pattern == Pattern::UnclassifiedTransfer)
        {
            return Err(ConfigError::Invalid(
                "unclassified_transfer is the fallback and cannot be a rule".into(),
            ));
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Pattern and package for a session, or `None` when nothing applies.
    pub fn classify(&self, session: &AppNetworkSession) -> Option<(Pattern, Option<String>)> {
        let v = session.volume;
        let candidates = session.candidate_packages();
        for rule in &self.rules {
            if v.total() < rule.min_bytes || !rule.direction_bias.holds(v.bytes_in, v.bytes_out) {
                continue;
            }
            if let Some(p) = rule.matching_package(&candidates) {
                return Some((rule.pattern, Some(p.to_string())));
            }
        }
        (v.total() >= self.unclassified_min_bytes)
            .then(|| (Pattern::UnclassifiedTransfer, session.package.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_rules() {
        let set = RuleSet::from_toml(
            r#"
unclassified_min_bytes = 5
[[rule]]
pattern = "ftp_server_exfil"
package_markers = ["com.*.files", "org.ftp*"]
direction_bias = "inbound_heavy"
min_bytes = 100
"#,
        )
        .unwrap();
        assert_eq!(set.unclassified_min_bytes, 5);
        assert_eq!(set.rules[0].direction_bias, DirectionBias::InboundHeavy);
        assert_eq!(
            set.rules[0].matching_package(&["x", "com.corproxy.files"]),
            Some("com.corproxy.files")
        );
        assert_eq!(set.rules[0].matching_package(&["net.files"]), None);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(RuleSet::from_toml(
            "[[rule]]\npattern = \"ftp_server_exfil\"\npackage_markers = []\n"
        )
        .is_err());
        assert!(
            RuleSet::from_toml("[[rule]]\npattern = \"nope\"\npackage_markers = [\"a\"]\n")
                .is_err()
        );
        assert!(RuleSet::from_toml(
            "[[rule]]\npattern = \"unclassified_transfer\"\npackage_markers = [\"a\"]\n"
        )
        .is_err());
        assert!(RuleSet::from_toml(
            "[[rule]]\npattern = \"ftp_server_exfil\"\npackage_markers = [\"a\"]\nmin_bytes = -1\n"
        )
        .is_err());
    }

    #[test]
    fn bias() {
        assert!(DirectionBias::InboundHeavy.holds(5, 5));
        assert!(!DirectionBias::InboundHeavy.holds(1, 5));
        assert!(DirectionBias::OutboundHeavy.holds(1, 5));
        assert!(DirectionBias::Any.holds(0, 0));
    }

    #[test]
    fn defaults_cover_the_three_apps() {
        let set = RuleSet::default();
        let pats: Vec<_> = set.rules.iter().map(|r| r.pattern).collect();
        assert_eq!(
            pats,
            vec![
                Pattern::FtpServerExfil,
                Pattern::SftpServerExfil,
                Pattern::HiddenCameraControl
            ]
        );
    }
}
