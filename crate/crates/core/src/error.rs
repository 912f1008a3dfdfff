use fairfed_he::HeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,
    #[error("no participants")]
    NoParticipants,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} is not below the class count {classes}")]
    InvalidLabel { label: usize, classes: usize },
    #[error("gradient has zero norm")]
    ZeroGradient,
    #[error("scalar products must be positive (s_ii = {s_ii}, s_00 = {s_00})")]
    NonPositiveScalars { s_ii: f64, s_00: f64 },
    #[error("reputation sum {0} is not positive")]
    ReputationCollapse(f64),
    #[error("{0} is required by the selected relative-reputation variant")]
    MissingParameter(&'static str),
    #[error("vector has zero variance")]
    ConstantVector,
    #[error("neighbour reports for participant {participant} disagree: {first} vs {second}")]
    ReportDisagreement {
        participant: usize,
        first: f64,
        second: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("malformed dataset at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<Error> },
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_round(self, round: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}
