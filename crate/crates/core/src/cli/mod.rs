//! Config-driven scenarios and report files.

mod report;
mod scenario;

pub use report::{emit_report, Format, ReportBundle, Summary, Table};
pub use scenario::{run_scenario, FuncSpec, Scenario, ScenarioKind};

use crate::asymptotics::Verdict;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit code for a finished run; inconclusive counts as not passing.
pub fn verdict_exit_code(v: Verdict) -> i32 {
    if v.passed() {
        EXIT_OK
    } else {
        EXIT_VERDICT
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else if matches!(e, Error::Io(_)) {
        EXIT_IO
    } else {
        EXIT_NUMERIC
    }
}
