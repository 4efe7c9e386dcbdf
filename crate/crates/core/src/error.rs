use thiserror::Error;

use crate::fitting::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state is not normalized: norm² = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not a physical density matrix: {0}")]
    NotPhysical(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("spiral spectrum is identically zero over the mode range")]
    DegenerateSpectrum,

    #[error("no amplitude survives storage (all efficiencies are zero)")]
    NoSurvivingAmplitude,

    #[error("visibility undefined for pair ({m}, {n}) basis {basis}: zero total counts")]
    UndefinedVisibility { m: i32, n: i32, basis: char },

    #[error("incomplete data: missing pairs {}", format_pairs(.missing))]
    IncompleteData { missing: Vec<(i32, i32)> },

    #[error("design matrix is rank deficient (rank {rank} of {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("underdetermined fit: {points} points for {params} parameters")]
    Underdetermined { points: usize, params: usize },

    #[error("degenerate fit: {reason}")]
    DegenerateFit {
        reason: String,
        partial: Box<FitResult>,
    },

    #[error("curve has no peak above its baseline")]
    NoPeak,

    #[error("monte carlo: {dropped} of {replicates} replicates failed")]
    TooManyDrops { dropped: usize, replicates: usize },

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the environment rather than of the input data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse(format!("{other:?}")),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

fn format_pairs(pairs: &[(i32, i32)]) -> String {
    pairs
        .iter()
        .map(|(m, n)| format!("({m},{n})"))
        .collect::<Vec<_>>()
        .join(", ")
}
