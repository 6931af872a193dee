use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("infinite log-ratio at output {0}")]
    InfiniteLogRatio(usize),

    #[error("cannot form r: Chernoff information is zero")]
    ZeroChernoff,

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("value {0} outside prior support")]
    OutOfSupport(f64),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("enumeration too large: {count} items exceeds limit {limit}")]
    EnumerationTooLarge { count: f64, limit: f64 },

    #[error("budget below one repetition unit: n = {n} < r = {r}")]
    BudgetBelowUnit { n: u64, r: u64 },

    #[error("impossible observation: output {0} has zero likelihood under the current posterior")]
    ImpossibleObservation(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Budget refusals are reported separately from validation failures.
    pub fn is_budget_refusal(&self) -> bool {
        matches!(self, Error::EnumerationTooLarge { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
