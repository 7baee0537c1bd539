//! Configuration-driven runs of the solver, the estimate audits and the
//! radial counterexample, with CSV and JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{echo_config, parse_config, parse_config_for, RunConfig, Subcommand};
pub use run::{run, Outcome};

/// Every estimate passed (warnings allowed) and every stage converged.
pub const EXIT_OK: i32 = 0;
/// At least one hard estimate failure, failed certification or failed
/// counterexample assertion.
pub const EXIT_AUDIT_FAILED: i32 = 1;
/// Some stage did not converge; takes precedence over [`EXIT_AUDIT_FAILED`].
pub const EXIT_NOT_CONVERGED: i32 = 2;
/// Configuration, I/O or numerical setup error; nothing trustworthy was written.
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] noncoercive_core::Error),
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}
