//! Config-driven experiments: run, verify, sweep, persist and audit.

pub mod audit;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod sweep;
pub mod trace_io;
pub mod verify;

pub use audit::{audit, audit_dir, AuditItem, AuditReport};
pub use config::{BoundsSpec, ExperimentConfig, GraphSpec, InitialSpec, ObjectiveSpec, WeightSpec};
pub use experiment::{
    run_experiment, write_outputs, BoundEvaluation, BoundFamily, BoundSummary, CheckOutcome, ConstantsKind,
    Experiment, RunOutput, SummaryReport,
};
pub use sweep::{sweep, SweepReport, SweepRow};
pub use trace_io::{export_trace, import_trace, TraceTable};
pub use verify::{verify, CheckStatus, NamedCheck, VerifyReport};

use crate::error::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

/// Exit code for an error: assumption and bound failures are check
/// failures, everything else is a configuration or input problem.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Assumption(_) | Error::LeftBox { .. } | Error::MassViolation { .. } | Error::DegenerateWeight { .. } => {
            EXIT_CHECK_FAILED
        }
        _ => EXIT_CONFIG_ERROR,
    }
}
