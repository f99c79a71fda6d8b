//! Error type shared by all pipeline stages.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading a snapshot file and
/// emitting a health verdict.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot parse timestamp from filename {path:?}: expected a stem like 2003.10.22.12.06.24")]
    UnparseableFilename { path: PathBuf },

    #[error("no snapshot files found in {dir:?}")]
    EmptyDataset { dir: PathBuf },

    #[error("snapshot {path:?} contains no data rows")]
    EmptySnapshot { path: PathBuf },

    #[error("snapshots {first} and {second} carry the same timestamp; reading order undefined")]
    DuplicateTimestamp { first: String, second: String },

    #[error("bearing {bearing:?} not present in the channel map")]
    UnknownBearing { bearing: String },

    #[error("{path:?}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{path:?}: channel {channel} requested but file has only {columns} columns")]
    ChannelOutOfRange {
        path: PathBuf,
        channel: usize,
        columns: usize,
    },

    #[error("invalid segment spec: hop {hop} must satisfy 1 <= hop <= window_len {window_len}")]
    BadSegmentSpec { window_len: usize, hop: usize },

    #[error("signal too short: {len} samples cannot fill one window of {window_len}")]
    SignalTooShort { len: usize, window_len: usize },

    #[error(
        "segment matrix needs more windows than window samples: \
         got {windows} windows of length {window_len}; \
         shorten the window or the hop"
    )]
    TooFewWindows { window_len: usize, windows: usize },

    #[error("dimension mismatch: {context}")]
    Dimension { context: String },

    #[error("k-means needs at least k points: k={k}, points={points}")]
    NotEnoughPoints { points: usize, k: usize },

    #[error("invalid k range: {detail}")]
    KRangeInvalid { detail: String },

    #[error("sequence has no observations")]
    EmptySequence,

    #[error("numerical failure: {context}")]
    Numerical { context: String },

    #[error("run too short: {total} readings, need at least {min}")]
    TooFewReadings { total: usize, min: usize },

    #[error("sample size {n} outside supported range [{min}, {max}]")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("sample is constant; statistic undefined")]
    ConstantSample,

    #[error("log-likelihoods have zero variance; baseline undefined")]
    ZeroVariance,
}

impl Error {
    /// Shorthand for dimension mismatches; `context` names both shapes.
    pub fn dim(context: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
        }
    }

    /// Shorthand for numerical failures.
    pub fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
        }
    }
}
