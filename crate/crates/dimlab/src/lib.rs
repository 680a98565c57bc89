//! Files, threads and the command line around [`dimlab_core`].
//!
//! * [`exec::Pool`] runs the core's chunked loops on a rayon pool.
//! * [`config`] holds the JSON formats for maps, measures, filters and
//!   schemes.
//! * [`output`] writes reports as CSV (with a `schema=1` header carrying the
//!   seed and a config hash) or JSON.
//! * [`cli`] is the `dimlab` command tree.

pub mod cli;
pub mod config;
pub mod exec;
pub mod output;

pub use cli::run;
pub use exec::Pool;

use dimlab_core::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad input: malformed files, invalid parameters, specs that fail
    /// validation.
    Validation(String),
    /// A requested size exceeds a budget.
    Budget(String),
    /// The computation ran and failed (no bracket, infeasible, harvest).
    Compute(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Budget(m) | CliError::Compute(m) => f.write_str(m),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::BudgetExceeded { .. } => CliError::Budget(msg),
            Error::OutOfDomain { .. }
            | Error::NotUnique { .. }
            | Error::InvalidMap(_)
            | Error::InvalidMeasure(_)
            | Error::InvalidInput(_)
            | Error::MalformedScheme(_)
            | Error::PadSymbolInvalid { .. }
            | Error::TooFewPoints { .. } => CliError::Validation(msg),
            _ => CliError::Compute(msg),
        }
    }
}
