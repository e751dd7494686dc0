use proptest::prelude::*;

use watchtrace::correlate::{Confidence, CorrelationConfig};
use watchtrace::evidence::{
    seal_bundle_with, verify_bundle, EvidenceItem, HashAlgorithm, SealOptions, SourceKind,
};
use watchtrace::host::{hash_host_pattern, parse_known_hosts};
use watchtrace::simulator::{
    correlate_rendered, oracle_findings, random_scenario, signatures, RandomBounds,
};
use watchtrace::time::{DisplayZone, Timestamp};

fn bounds() -> impl Strategy<Value = RandomBounds> {
    (1usize..=8, 1usize..=8, 1i64..=72, 1usize..=10, 1usize..=10).prop_map(|(a, n, h, s, w)| {
        RandomBounds {
            max_apps: a,
            max_networks: n,
            max_span_hours: h,
            max_app_sessions: s,
            max_wifi_sessions: w,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlator_agrees_with_oracle(seed in any::<u64>(), b in bounds()) {
        let cfg = CorrelationConfig::default();
        let s = random_scenario(seed, b);
        let out = correlate_rendered(&s, DisplayZone::default(), &cfg, true).unwrap();
        prop_assert_eq!(signatures(&out.findings, &out.timeline), oracle_findings(&s, &cfg.rules, cfg.bucket));
        let bytes: u64 = out.sessions.iter().map(|x| x.volume.total()).sum();
        prop_assert_eq!(bytes, s.total_bytes());
    }

    #[test]
    fn withholding_host_artifacts_never_raises_confidence(seed in any::<u64>()) {
        let cfg = CorrelationConfig::default();
        let s = random_scenario(seed, RandomBounds::default());
        let with = correlate_rendered(&s, DisplayZone::default(), &cfg, true).unwrap();
        let without = correlate_rendered(&s, DisplayZone::default(), &cfg, false).unwrap();
        prop_assert_eq!(with.findings.len(), without.findings.len());
        for (a, b) in with.findings.iter().zip(&without.findings) {
            prop_assert_ne!(b.confidence, Confidence::Corroborated);
            if a.confidence != Confidence::Corroborated {
                prop_assert_eq!(a.confidence, b.confidence);
            }
        }
    }

    #[test]
    fn sealed_payloads_verify_and_flips_are_caught(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..256), 1..5),
        pick in any::<prop::sample::Index>(),
        mask in 1u8..=255,
        sha512 in any::<bool>(),
    ) {
        let alg = if sha512 { HashAlgorithm::Sha512 } else { HashAlgorithm::Sha256 };
        let at = Timestamp::from_epoch(1_683_766_560).unwrap();
        let items: Vec<(EvidenceItem, &[u8])> = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| (EvidenceItem::capture(format!("item{i}"), SourceKind::Netstats, at, "pc", p, alg), p.as_slice()))
            .collect();
        let opts = SealOptions { hash_algorithm: alg, ..Default::default() };
        let bundle = seal_bundle_with(&items, None, opts).unwrap();
        let mut stored: std::collections::BTreeMap<String, Vec<u8>> =
            payloads.iter().enumerate().map(|(i, p)| (format!("item{i}"), p.clone())).collect();
        prop_assert!(verify_bundle(&bundle, &stored).passed);
        let label = format!("item{}", pick.index(payloads.len()));
        let bytes = stored.get_mut(&label).unwrap();
        let i = pick.index(bytes.len());
        bytes[i] ^= mask;
        let report = verify_bundle(&bundle, &stored);
        prop_assert!(!report.passed);
        prop_assert_eq!(report.failed_labels(), vec![label.as_str()]);
    }

    #[test]
    fn hashed_known_hosts_match_only_their_host(
        a in (0u8..=255, 0u8..=255, 0u8..=255, 0u8..=255),
        port in 1u16..,
        salt in prop::collection::vec(any::<u8>(), 20),
    ) {
        let host = format!("{}.{}.{}.{}", a.0, a.1, a.2, a.3);
        let line = format!("{} ssh-ed25519 AAAAC3NzaC1lZDI1NTE5AAAAIA==\n", hash_host_pattern(&host, port, &salt));
        let parsed = parse_known_hosts(&line);
        prop_assert_eq!(parsed.value.len(), 1);
        let e = &parsed.value[0];
        prop_assert!(e.hashed_matches(&host, port));
        prop_assert!(!e.hashed_matches(&host, port.wrapping_add(1).max(1)) || port == u16::MAX);
        prop_assert!(!e.matches_ip(&host));
    }
}
