use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped by the layer that produces them: data validation,
/// density evaluation, estimation, sampling and model checking.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // -- data ---------------------------------------------------------------
    #[error("source `{0}`: uncertainty s must be strictly positive")]
    NonPositiveUncertainty(String),
    #[error("source `{source_id}`: field `{field}` is not finite")]
    NonFiniteValue { source_id: String, field: String },
    #[error("duplicate source id `{0}`")]
    DuplicateSourceId(String),
    #[error("covariate dimension mismatch: expected {expected}, source `{source_id}` has {found}")]
    CovariateDimensionMismatch {
        source_id: String,
        expected: usize,
        found: usize,
    },
    #[error("too few sources: need at least {required}, got {found}")]
    TooFewSources { required: usize, found: usize },
    #[error("source `{0}`: value outside the domain of the transformation")]
    DomainViolation(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("i/o error: {0}")]
    Io(String),

    // -- densities ----------------------------------------------------------
    #[error("invalid scale {0}: must be finite and > 0")]
    InvalidScale(f64),
    #[error("invalid correlation {0}: must lie in (-1, 1)")]
    InvalidCorrelation(f64),
    #[error("negative argument {0} for a density on [0, inf)")]
    NegativeArgument(f64),
    #[error("invalid shape parameter {0}")]
    InvalidShape(f64),

    // -- estimators ---------------------------------------------------------
    #[error("empty dataset")]
    EmptyDataset,
    #[error("a confidence interval needs at least two sources")]
    NoVariance,
    #[error("design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("estimator requires covariates but the dataset has none")]
    MissingCovariates,
    #[error("sample standard deviation of log s is zero; sigma_s must be > 0")]
    DegenerateUncertainty,
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    // -- sampler ------------------------------------------------------------
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("no finite starting point found after {0} attempts")]
    InitializationFailure(usize),
    #[error("non-finite log density (coordinate {0})")]
    NonFiniteDensity(usize),
    #[error("sampler diverged: {0}")]
    SamplerDiverged(String),
    #[error("not enough draws: {0}")]
    InsufficientDraws(String),

    // -- model checking / draws ---------------------------------------------
    #[error("missing parameter `{0}` in posterior draws")]
    MissingParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
