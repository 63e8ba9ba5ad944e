use thiserror::Error;

/// Errors raised while reading MIDI files, bundles and SMP manifests.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("MIDI parse error at byte {offset}: {message}")]
    Midi { offset: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("at least 2 downbeats are required, got {0}")]
    TooFewDownbeats(usize),
    #[error("downbeat gaps deviate from the median by more than {tolerance_s} s at indices {indices:?}")]
    IrregularDownbeats { indices: Vec<usize>, tolerance_s: f64 },
    #[error("unsupported time signature numerator {0} (expected 3 or 4)")]
    TimeSignature(u8),
    #[error("cannot estimate a key from an empty note list")]
    EmptyNotes,
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("cannot form {k} clusters from {n} points")]
    InvalidClusterCount { k: usize, n: usize },
    #[error("segment length must be at least one bar")]
    ZeroLength,
}

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("bpm must be positive, got {0} and {1}")]
    NonPositiveBpm(f64, f64),
    #[error("harmony length mismatch: {0} vs {1} beats")]
    HarmonyLength(usize, usize),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate track id {0:?}")]
    DuplicateTrack(String),
    #[error("index format version mismatch: file has {found}, this build reads {expected}")]
    Version { found: u32, expected: u32 },
    #[error("index checksum mismatch: header says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("K must be positive")]
    ZeroK,
    #[error("unknown track id {0:?}")]
    UnknownTrack(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("K must be positive")]
    ZeroK,
    #[error("n must be positive")]
    ZeroN,
    #[error("metric is undefined over an empty query set")]
    NoQueries,
    #[error("track {0:?} has no counterpart in the ground truth")]
    NoCounterpart(String),
    #[error("track {0:?} has more than one counterpart in the ground truth")]
    AmbiguousCounterpart(String),
    #[error("ground truth references track {0:?} which is not in the corpus")]
    MissingTrack(String),
}

/// Crate-level error; the display string is prefixed with the failing module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("quantizer: {0}")]
    Grid(#[from] GridError),
    #[error("segmenter: {0}")]
    Segment(#[from] SegmentError),
    #[error("similarity: {0}")]
    Similarity(#[from] SimilarityError),
    #[error("retrieval: {0}")]
    Index(#[from] IndexError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
