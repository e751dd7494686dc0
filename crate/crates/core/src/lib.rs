//! Smartwatch exfiltration triage: dump parsers, host artifact readers,
//! a session correlator, a watch-only policy audit, evidence bundling and
//! a seeded scenario simulator.

pub mod acquisition;
pub mod analysis;
pub mod correlate;
pub mod dumpsys;
pub mod error;
pub mod evidence;
pub mod host;
pub mod policy;
pub mod report;
pub mod simulator;
pub mod time;
