use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AppSession, HostArtifactKind, HostSideEntry, Scenario, WifiSession};
use crate::time::Timestamp;

const HOUR: i64 = 3600;

/// Size limits for generated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomBounds {
    pub max_apps: usize,
    pub max_networks: usize,
    pub max_span_hours: i64,
    pub max_app_sessions: usize,
    pub max_wifi_sessions: usize,
}

impl Default for RandomBounds {
    fn default() -> Self {
        RandomBounds {
            max_apps: 8,
            max_networks: 8,
            max_span_hours: 72,
            max_app_sessions: 10,
            max_wifi_sessions: 10,
        }
    }
}

const PACKAGES: [&str; 10] = [
    "com.corproxy.files",
    "net.xnano.android.sshserver",
    "com.view.ppcs",
    "com.samsung.android.wearable.music",
    "com.google.android.apps.fitness",
    "org.example.notes",
    "org.example.sync",
    "com.example.weather",
    "com.example.chat",
    "com.example.camera.remote",
];

const SSIDS: [&str; 10] = [
    "KT_GiGA_5G_EFB7",
    "outgoingowl",
    "F818026FNMEN",
    "iptime_home",
    "U+Net4A21",
    "olleh_WiFi",
    "cafe_guest",
    "office-5G",
    "SK_WiFiGIGA1C2D",
    "library_free",
];

fn bytes(rng: &mut ChaCha8Rng) -> u64 {
    match rng.random_range(0..4) {
        0 => 0,
        1 => rng.random_range(1..200_000),
        2 => rng.random_range(200_000..12_000_000),
        _ => rng.random_range(12_000_000..200_000_000),
    }
}

/// A reproducible scenario for `seed`. Wi-Fi sessions are sequential and
/// never overlap, though two can still share an hour bucket.
pub fn random_scenario(seed: u64, bounds: RandomBounds) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Somewhere in late 2023, minute-aligned like a manual capture.
    let capture = 1_698_000_000 + rng.random_range(0..30 * 24 * 60) * 60;
    let span = rng.random_range(1..=bounds.max_span_hours.max(1)) * HOUR;
    let horizon = capture - span;
    let n_apps = rng.random_range(1..=bounds.max_apps.clamp(1, PACKAGES.len()));
    let n_nets = rng.random_range(1..=bounds.max_networks.clamp(1, SSIDS.len()));
    let apps = &PACKAGES[..n_apps];
    let nets = &SSIDS[..n_nets];
    let ts = |s: i64| Timestamp::from_epoch(s).expect("generated times are after the epoch");

    let mut wifi_sessions = Vec::new();
    let mut t = horizon + rng.random_range(0..HOUR);
    for _ in 0..rng.random_range(0..=bounds.max_wifi_sessions) {
        let len = rng.random_range(60..4 * HOUR);
        if t + len > capture {
            break;
        }
        wifi_sessions.push(WifiSession {
            ssid: nets[rng.random_range(0..nets.len())].to_string(),
            start: ts(t),
            end: ts(t + len),
            bytes_in: bytes(&mut rng),
            bytes_out: bytes(&mut rng),
            assigned_ip: format!(
                "{}.{}.{}.{}",
                [10, 172, 192][rng.random_range(0..3)],
                rng.random_range(0..=255),
                rng.random_range(0..=255),
                rng.random_range(1..=254)
            ),
            announce_ssid: rng.random_bool(0.75),
        });
        t += len + rng.random_range(0..3 * HOUR);
    }

    let mut app_sessions = Vec::new();
    for _ in 0..rng.random_range(0..=bounds.max_app_sessions) {
        let start = rng.random_range(horizon..capture - 60);
        let end = (start + rng.random_range(30..3 * HOUR)).min(capture);
        app_sessions.push(AppSession {
            package: apps[rng.random_range(0..apps.len())].to_string(),
            start: ts(start),
            end: ts(end),
        });
    }

    let mut reboots = Vec::new();
    if rng.random_bool(0.3) {
        reboots.push(ts(rng.random_range(horizon..=capture)));
    }

    let mut host_side = Vec::new();
    for w in &wifi_sessions {
        if rng.random_bool(0.4) {
            let kind = if rng.random_bool(0.5) {
                HostArtifactKind::Recentservers
            } else {
                HostArtifactKind::KnownHosts
            };
            let port = [21, 22, 2221, 2222][rng.random_range(0..4)];
            host_side.push(HostSideEntry {
                kind,
                host: w.assigned_ip.clone(),
                port,
            });
        }
    }
    if rng.random_bool(0.3) {
        host_side.push(HostSideEntry {
            kind: HostArtifactKind::KnownHosts,
            host: "203.0.113.9".into(),
            port: 22,
        });
    }

    Scenario {
        capture_time: ts(capture),
        app_sessions,
        wifi_sessions,
        reboots,
        host_side,
    }
}
