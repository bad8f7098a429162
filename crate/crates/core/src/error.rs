use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// The variants line up with the failure modes of the individual modules so
/// callers (and the CLI exit-code mapping) can tell validation problems apart
/// from runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integrality violated: {0}")]
    Integrality(String),
    #[error("population fractions do not sum to one (sum = {sum})")]
    Fraction { sum: f64 },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no subsidy in the sweep brackets alpha = {alpha}")]
    Infeasible { alpha: f64 },
    #[error("degenerate linear region: {0}")]
    DegenerateThreshold(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("state space too large: {states} states exceeds cap {cap}")]
    Size { states: usize, cap: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate key (n = {n}, policy = {policy}, seed = {seed})")]
    DuplicateKey { n: u64, policy: String, seed: u64 },
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Integrality(_)
                | Error::Fraction { .. }
                | Error::Range(_)
                | Error::Shape(_)
                | Error::Parse(_)
                | Error::DuplicateKey { .. }
                | Error::Validation(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable name used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Integrality(_) => "IntegralityError",
            Error::Fraction { .. } => "FractionError",
            Error::Range(_) => "RangeError",
            Error::Shape(_) => "ShapeError",
            Error::Infeasible { .. } => "InfeasibleError",
            Error::DegenerateThreshold(_) => "DegenerateThresholdError",
            Error::Convergence(_) => "ConvergenceError",
            Error::SingularSystem(_) => "SingularSystemError",
            Error::Size { .. } => "SizeError",
            Error::Parse(_) => "ParseError",
            Error::DuplicateKey { .. } => "DuplicateKeyError",
            Error::Validation(_) => "ValidationError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
