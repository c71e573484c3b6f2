//! Configuration-driven scenario runner for the *-Ricci flow laboratory.

pub mod config;
pub mod report;
pub mod suites;

pub use config::{ConfigError, ScenarioConfig};
pub use report::{emit_outputs, Format, Output, OutputError, Row, Status, VerificationReport};
pub use suites::{run_suite, Suite};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILURE: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
    pub const RUNTIME_ERROR: i32 = 3;
}

/// Worker cap read from `STARLAB_THREADS`.
pub fn thread_cap() -> Option<usize> {
    std::env::var("STARLAB_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}
