//! Command-line orchestration: configuration, per-stage helpers and the
//! `analyze`, `quality` and `calibrate` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::{cmd_analyze, cmd_calibrate, cmd_quality, expected_outputs};
pub use config::RunConfig;
pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL, EXIT_OK};

/// Run `f` on a pool of `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}
