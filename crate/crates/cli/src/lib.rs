//! The `wrbm` experiment runner: configuration, commands and artifact
//! writers. The binary in `main.rs` only parses flags and maps errors to
//! exit codes.

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, Overrides};

/// Process exit status for a failed command: 1 for numerical failures
/// inside the algorithms, 2 for bad input, configuration or I/O.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use wrbm_core::Error;
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(2, |e| match e {
            Error::Numerical(_) | Error::SinkhornNotConverged { .. } => 1,
            _ => 2,
        })
}
