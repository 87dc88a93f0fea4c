use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("zero-length audio")]
    EmptyAudio,

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty prompt: spectrogram carries no energy")]
    EmptyPrompt,

    #[error("component count {components} exceeds matrix dimensions {rows}x{cols}")]
    RankConstraint {
        components: usize,
        rows: usize,
        cols: usize,
    },

    #[error("prompt too short: {duration_sec:.3}s (need at least {min_sec}s)")]
    PromptTooShort { duration_sec: f64, min_sec: f64 },

    #[error("onset list is not sorted ascending")]
    Unsorted,

    #[error("invalid rhythm track: {0}")]
    InvalidTrack(String),

    #[error("silent input")]
    SilentInput,

    #[error("cannot aggregate an empty list of reports")]
    EmptyReports,

    #[error("source too short for chunking: {duration_sec:.3}s < {min_sec}s")]
    SourceTooShort { duration_sec: f64, min_sec: f64 },

    #[error("stem pair mismatch: {0}")]
    PairMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
