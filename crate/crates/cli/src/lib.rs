//! Scenario runner for cooperative exchange economies.
//!
//! Three commands share one JSON scenario format:
//!
//! - `run` simulates the economy and writes `trace.csv` and `summary.json`,
//! - `region` samples the boundary of the supportable demand region,
//! - `verify` cross-checks the fast routines against brute-force oracles on
//!   the scenario's instance family.

pub mod region;
pub mod run;
pub mod scenario;
pub mod verify;

use thiserror::Error;

pub use region::cmd_region;
pub use run::{cmd_run, RunOptions};
pub use scenario::ScenarioFile;
pub use verify::{cmd_verify, CheckOutcome};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "EXCHANGE_ECON_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("benchmark infeasible: {0}")]
    Infeasible(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ChecksFailed(_) => 1,
            Self::Validation(_) | Self::Io(_) | Self::Csv(_) => 2,
            Self::Infeasible(_) => 3,
        }
    }
}

/// Decimal rendering with 12 significant digits and no trailing zeros.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Worker pool sized by [`THREADS_ENV`] when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))
}
