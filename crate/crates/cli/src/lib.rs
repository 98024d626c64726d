//! Batch driver for the road-field solvers.
//!
//! A run is one JSON document (see [`config::RunConfig`]); the subcommand
//! decides what is computed and every output file records the SHA-256 of the
//! document and its tolerance block.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, run_loaded, Command, Outcome};
pub use config::{LoadedConfig, RunConfig};
pub use error::Failure;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "ROADFIELD_WORKERS";

/// Sizes the global thread pool from [`WORKERS_ENV`] when set.
pub fn init_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::config(format!("{WORKERS_ENV}: {e}")))
}
