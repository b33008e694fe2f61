use thiserror::Error;

/// Broad class of an [`Error`], used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Input data could not be read, parsed or validated.
    Data,
    /// The data were valid but an estimator could not be computed.
    Estimation,
}

/// Stratum and category numbers carried by variants are 1-based, as in input files.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown category label {label:?}")]
    UnknownCategory { label: String },

    #[error("category index {index} out of range for {categories} categories")]
    CategoryOutOfRange { index: usize, categories: usize },

    #[error("unknown stratum {stratum}")]
    UnknownStratum { stratum: usize },

    #[error("weight {weight} of unit {unit} must be positive and finite")]
    NonpositiveWeight { unit: usize, weight: f64 },

    #[error("non-finite value {value} for unit {unit}")]
    NonFiniteValue { unit: usize, value: f64 },

    #[error("stratum {stratum} has no sampled units")]
    EmptyStratum { stratum: usize },

    #[error("stratum {stratum} has {size} sampled units, need at least 2")]
    StratumTooSmall { stratum: usize, size: usize },

    #[error("no respondents in stratum {stratum}")]
    NoRespondents { stratum: usize },

    #[error("invalid stratum metadata: {0}")]
    InvalidMeta(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("nonpositive likelihood denominator for unit {unit} of stratum {stratum}")]
    NonpositiveDenominator { stratum: usize, unit: usize },

    #[error("total probability mass is zero")]
    ZeroMass,

    #[error("no respondents in cell (stratum {stratum}, category {category})")]
    EmptyRespondentCell { stratum: usize, category: usize },

    #[error("category {category} does not occur in the sample")]
    EmptyCategory { category: usize },

    #[error("initial point and all perturbations are rejected by the objective")]
    InitialPointRejected,

    #[error("negative variance {0}")]
    NegativeVariance(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidModel(_) | DimensionMismatch { .. } | NegativeVariance(_) => {
                ErrorKind::Usage
            }
            Parse { .. }
            | UnknownCategory { .. }
            | CategoryOutOfRange { .. }
            | UnknownStratum { .. }
            | NonpositiveWeight { .. }
            | NonFiniteValue { .. }
            | EmptyStratum { .. }
            | StratumTooSmall { .. }
            | NoRespondents { .. }
            | InvalidMeta(_)
            | Io(_)
            | Json(_)
            | Csv(_) => ErrorKind::Data,
            NonpositiveDenominator { .. }
            | ZeroMass
            | EmptyRespondentCell { .. }
            | EmptyCategory { .. }
            | InitialPointRejected => ErrorKind::Estimation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
