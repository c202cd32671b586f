//! Configuration, artifacts and the end-to-end run.

pub mod config;
pub mod demos;
pub mod dump;
pub mod pipeline;
pub mod tables;

pub use config::{load_config, load_config_str, LoadedConfig, ProblemSpec, RunConfig};
pub use pipeline::{run, write_error_record, Manifest, RunError, RunSummary};

use crate::error::Error;

/// Process exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. }
        | Error::Capacity(_)
        | Error::Internal(_)
        | Error::Shape(_)
        | Error::Unsupported(_) => 3,
        Error::Parse { .. }
        | Error::Config(_)
        | Error::InconsistentClosure(_)
        | Error::UnsupportedOrder(_)
        | Error::Regularity { .. }
        | Error::SingularCoefficient { .. }
        | Error::Io { .. } => 4,
    }
}
