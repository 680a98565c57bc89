use alloc::string::String;

/// Everything that can go wrong inside the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point {x} lies in no branch domain")]
    OutOfDomain { x: f64 },

    #[error("inverse branch {symbol} failed at y = {y} (residual {residual:e})")]
    NoConvergence { symbol: usize, y: f64, residual: f64 },

    #[error("branch {branch} has more than one fixed point")]
    NotUnique { branch: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: {requested} exceeds the budget of {budget}")]
    BudgetExceeded { what: &'static str, requested: u128, budget: u128 },

    #[error("orbit left the branch domains at step {step} (x = {x})")]
    OrbitEscaped { step: usize, x: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no good cylinders at any depth in {n_min}..={n_max}")]
    EmptySelection { n_min: usize, n_max: usize },

    #[error("rate at s = 0 is {rate_at_zero}, so there is nothing to bracket")]
    NoBracket { rate_at_zero: f64 },

    #[error("no restart produced a feasible point")]
    Infeasible,

    #[error("malformed scheme: {0}")]
    MalformedScheme(String),

    #[error("harvest failed at stage {stage}: retained mass {retained:.4}, worst bound: {bound}")]
    HarvestFailed { stage: usize, retained: f64, bound: &'static str },

    #[error("pad symbol {symbol} is unusable: {reason}")]
    PadSymbolInvalid { symbol: usize, reason: String },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
}

impl Error {
    pub(crate) fn budget(what: &'static str, requested: u128, budget: u128) -> Self {
        Error::BudgetExceeded { what, requested, budget }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
