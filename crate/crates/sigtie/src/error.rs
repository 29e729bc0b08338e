use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv layout error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no transactions survive the maturity filter")]
    EmptyInput,

    #[error(
        "{rejected} of {total} rows rejected ({percent:.2}%), above the {limit:.2}% guard; \
         enable the override to continue"
    )]
    RejectRate {
        rejected: usize,
        total: usize,
        percent: f64,
        limit: f64,
    },

    #[error("window length {tau} exceeds the {days} available days")]
    WindowTooLong { tau: usize, days: usize },

    #[error("estimation needs at least two active banks, found {0}")]
    TooFewBanks(usize),

    #[error("window {0} carries no directed counts")]
    MissingDirectedCounts(usize),

    #[error("estimate variant {found} incompatible with {expected}")]
    VariantMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("estimate and window cover different banks")]
    BankSetMismatch,

    #[error("duration spells require contiguous fixed windows")]
    NonContiguousWindows,

    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),

    #[error("significant edge ({0}, {1}) is not an edge of the aggregate network")]
    SignificantEdgeMissing(usize, usize),

    #[error("power-law fit needs at least two observations at or above d_min")]
    TooFewDurations,

    #[error("power-law fit degenerate: all durations equal")]
    DegenerateDurations,

    #[error("no significant ties: comparison set is empty")]
    EmptySignificantSet,

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
