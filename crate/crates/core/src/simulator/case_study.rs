//! Ground-truth scenarios for the three documented incidents, plus the
//! same-bucket ambiguity case. Times are epoch seconds; comments give
//! Asia/Seoul wall-clock.

use super::{AppSession, HostArtifactKind, HostSideEntry, Scenario, WifiSession};
use crate::time::Timestamp;

fn ts(s: i64) -> Timestamp {
    Timestamp::from_epoch(s).expect("case-study times are after the epoch")
}

fn app(package: &str, start: i64, end: i64) -> AppSession {
    AppSession {
        package: package.into(),
        start: ts(start),
        end: ts(end),
    }
}

fn wifi(ssid: &str, start: i64, end: i64, bytes_in: u64, bytes_out: u64, ip: &str) -> WifiSession {
    WifiSession {
        ssid: ssid.into(),
        start: ts(start),
        end: ts(end),
        bytes_in,
        bytes_out,
        assigned_ip: ip.into(),
        announce_ssid: true,
    }
}

pub const FTP_PACKAGE: &str = "com.corproxy.files";
pub const FTP_SSID: &str = "KT_GiGA_5G_EFB7";
pub const FTP_IP: &str = "172.30.1.76";
/// 2023-05-11 01:14:16
pub const FTP_APP_START: i64 = 1_683_735_256;
pub const FTP_BYTES_IN: u64 = 47_054_848;

pub const SFTP_PACKAGE: &str = "net.xnano.android.sshserver";
pub const SFTP_SSID: &str = "outgoingowl";
pub const SFTP_IP: &str = "192.162.35.52";
/// 2023-05-11 21:10:06
pub const SFTP_APP_START: i64 = 1_683_807_006;

pub const CAMERA_PACKAGE: &str = "com.view.ppcs";
pub const CAMERA_SSID: &str = "F818026FNMEN";
/// 2023-05-09 13:59:00
pub const CAMERA_APP_START: i64 = 1_683_608_340;
/// 2023-05-08 21:00, the bucket left without usage events.
pub const CAMERA_EXPIRED_ST: i64 = 1_683_547_200;
pub const CAMERA_BYTES_OUT: u64 = 31_000_000;
pub const CAMERA_EXPIRED_BYTES_OUT: u64 = 125_000_000;

/// Captured 2023-05-11 09:56. Download over KT_GiGA_5G_EFB7 from 01:10:02
/// to 02:24:10, plus unrelated small traffic at home in the morning.
pub fn ftp_case() -> Scenario {
    Scenario {
        capture_time: ts(1_683_766_560),
        app_sessions: vec![
            app(FTP_PACKAGE, FTP_APP_START, 1_683_737_920),
            app(
                "com.samsung.android.wearable.music",
                1_683_763_800,
                1_683_764_400,
            ),
        ],
        wifi_sessions: vec![
            wifi(
                FTP_SSID,
                1_683_735_002,
                1_683_739_450,
                FTP_BYTES_IN,
                1_203_712,
                FTP_IP,
            ),
            wifi(
                "iptime_home",
                1_683_763_500,
                1_683_765_600,
                850_000,
                120_000,
                "192.168.0.23",
            ),
        ],
        reboots: vec![],
        host_side: vec![HostSideEntry {
            kind: HostArtifactKind::Recentservers,
            host: FTP_IP.into(),
            port: 2221,
        }],
    }
}

/// Captured 2023-05-11 21:45. The PC pulls files from the watch's SSH
/// server over outgoingowl; sftp.exe left a known_hosts line.
pub fn sftp_case() -> Scenario {
    Scenario {
        capture_time: ts(1_683_809_100),
        app_sessions: vec![app(SFTP_PACKAGE, SFTP_APP_START, 1_683_808_680)],
        wifi_sessions: vec![wifi(
            SFTP_SSID,
            1_683_806_740,
            1_683_808_860,
            412_000,
            18_350_000,
            SFTP_IP,
        )],
        reboots: vec![],
        host_side: vec![HostSideEntry {
            kind: HostArtifactKind::KnownHosts,
            host: SFTP_IP.into(),
            port: 2222,
        }],
    }
}

/// Captured 2023-05-09 23:00. Camera control on May 8 21:00 (outside the
/// 24 h detail window) and again on May 9 from 13:59.
pub fn camera_case() -> Scenario {
    Scenario {
        capture_time: ts(1_683_640_800),
        app_sessions: vec![
            app(CAMERA_PACKAGE, 1_683_547_230, 1_683_550_320),
            app(CAMERA_PACKAGE, CAMERA_APP_START, 1_683_609_900),
        ],
        wifi_sessions: vec![
            wifi(
                CAMERA_SSID,
                1_683_547_210,
                1_683_550_500,
                2_100_000,
                CAMERA_EXPIRED_BYTES_OUT,
                "192.168.1.2",
            ),
            wifi(
                CAMERA_SSID,
                1_683_608_250,
                1_683_610_080,
                1_050_000,
                CAMERA_BYTES_OUT,
                "192.168.1.2",
            ),
        ],
        reboots: vec![],
        host_side: vec![],
    }
}

/// All three incidents, one bundle each.
pub fn composite() -> Vec<(&'static str, Scenario)> {
    vec![
        ("ftp", ftp_case()),
        ("sftp", sftp_case()),
        ("camera", camera_case()),
    ]
}

/// Two SSIDs carry traffic in the same hour and one app event falls in
/// it. Leases carry no SSID, so only time can link them, and the host
/// artifact names one of those IPs.
pub fn same_bucket_case() -> Scenario {
    let hour = 1_683_712_800; // 2023-05-10 19:00
    let mut home = wifi(
        "iptime_home",
        hour + 300,
        hour + 1_500,
        20_000_000,
        500_000,
        "192.168.0.23",
    );
    let mut cafe = wifi(
        "cafe_guest",
        hour + 2_100,
        hour + 3_300,
        15_000_000,
        400_000,
        "10.20.30.40",
    );
    home.announce_ssid = false;
    cafe.announce_ssid = false;
    Scenario {
        capture_time: ts(hour + 4 * 3600),
        app_sessions: vec![app(FTP_PACKAGE, hour + 1_800, hour + 1_920)],
        wifi_sessions: vec![home, cafe],
        reboots: vec![],
        host_side: vec![HostSideEntry {
            kind: HostArtifactKind::Recentservers,
            host: "192.168.0.23".into(),
            port: 2221,
        }],
    }
}

/// The FTP case with a reboot after the transfer: the lease log restarts
/// empty.
pub fn ftp_rebooted_case() -> Scenario {
    let mut s = ftp_case();
    s.reboots.push(ts(1_683_762_000)); // 08:40, before the home session
    s
}
