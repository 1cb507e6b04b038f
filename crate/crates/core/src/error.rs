use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of a function.
    Domain(&'static str),
    /// Cholesky factorization hit a non-positive pivot.
    Singular { pivot: usize },
    /// Design matrix unusable for fitting (rank deficiency, too few rows).
    Design(String),
    /// A subject has unit leverage, so HC3 is undefined.
    DegenerateLeverage { row: usize },
    /// Every stratum has zero hypergeometric variance.
    DegenerateTable,
    /// A stratum lacks one of the two arms.
    StratumStructure { stratum: String },
    NumericalDegeneracy(&'static str),
    InsufficientData(&'static str),
    BootstrapFailure { successes: usize, failures: usize, required: usize },
    /// The Zhang interval cannot be inverted: critical value is not below n.
    DegenerateInversion { critical: f64, n: usize },
    /// Root-finding target is outside the bracket.
    Bracket { target: f64 },
    /// A requested column is missing.
    Schema { column: String },
    /// Bad cell value. `row` is the 1-based data row.
    Parse { row: usize, message: String },
    /// A covariate has the wrong type for the requested method.
    CovariateType { column: String },
    /// The primary working model did not converge.
    NonConvergence,
    /// No usable replicates to summarize for a method.
    Aggregation { method: String },
    /// Method-specific precondition failed.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::Singular { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::Design(msg) => write!(f, "design error: {msg}"),
            Error::DegenerateLeverage { row } => {
                write!(f, "row {row} has unit leverage; HC3 covariance undefined")
            }
            Error::DegenerateTable => write!(
                f,
                "all strata have zero variance; the MH chi-square statistic cannot be computed"
            ),
            Error::StratumStructure { stratum } => {
                write!(f, "stratum {stratum} has an empty treatment arm")
            }
            Error::NumericalDegeneracy(what) => write!(f, "numerical degeneracy: {what}"),
            Error::InsufficientData(what) => write!(f, "insufficient data: {what}"),
            Error::BootstrapFailure { successes, failures, required } => write!(
                f,
                "bootstrap failed: {successes} successful replicates ({failures} failed), {required} required"
            ),
            Error::DegenerateInversion { critical, n } => write!(
                f,
                "score interval cannot be inverted: critical value {critical} is not below n = {n}"
            ),
            Error::Bracket { target } => {
                write!(f, "target {target} is outside the bisection bracket")
            }
            Error::Schema { column } => write!(f, "missing column \"{column}\""),
            Error::Parse { row, message } => write!(f, "parse error at row {row}: {message}"),
            Error::CovariateType { column } => write!(
                f,
                "covariate \"{column}\" is real-valued; CMH-family methods require categorical covariates"
            ),
            Error::NonConvergence => write!(f, "logistic working model did not converge"),
            Error::Aggregation { method } => {
                write!(f, "no usable replicates for method {method}")
            }
            Error::Invalid(msg) => f.write_str(msg),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
