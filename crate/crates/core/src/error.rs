use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported audio format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),
    #[error("invalid audio clip: {0}")]
    InvalidClip(&'static str),
    #[error("source {path} is too short for a chunk ({duration_s:.3} s < 0.3 s)")]
    SourceTooShort { path: PathBuf, duration_s: f64 },
    #[error("stale chunk reference {chunk_id}: {reason}")]
    StaleRef { chunk_id: String, reason: String },
    #[error("unknown chunk id {0}")]
    UnknownChunk(String),
    #[error("duplicate source {0} in bank")]
    DuplicateSource(String),
    #[error("chunk bank has no chunks")]
    EmptyBank,
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("mix has zero signal power")]
    ZeroSignalPower,
    #[error("sample {index}: no usable mix after {attempts} attempts")]
    RejectionBudgetExceeded { index: usize, attempts: usize },
    #[error("signal too short: {len} samples < window of {window}")]
    SignalTooShort { len: usize, window: usize },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("need at least 3 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid predictions: {0}")]
    InvalidPredictions(String),
    #[error("unknown species code {0:?}")]
    UnknownSpecies(String),
    #[error("unsupported option: {0}")]
    Unsupported(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("png encoding failed for {path}: {source}")]
    Png {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
