use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("negative confidence {value} at flat index {index}")]
    NegativeValue { index: usize, value: f32 },

    #[error("non-finite confidence at flat index {index}")]
    NonFiniteValue { index: usize },

    #[error("pixel ({row}, {col}) has zero total confidence and cannot be normalized")]
    ZeroSumPixel { row: usize, col: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: u32, n_classes: usize },

    #[error("dimension mismatch: expected {expected:?} (HxW), found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("segment {id} has no pixels")]
    EmptySegment { id: u32 },

    #[error("duplicate segment id {0}")]
    DuplicateSegmentId(u32),

    #[error("pixel index {index} outside a {height}x{width} mask")]
    PixelOutOfBounds {
        index: usize,
        height: usize,
        width: usize,
    },

    #[error("score {name}={value} outside [0, 1]")]
    ScoreOutOfRange { name: &'static str, value: f64 },

    #[error("ground truth has no {missing} pixels for class {class}; AUC is undefined")]
    SingleClassGroundTruth { class: u32, missing: &'static str },

    #[error("source scene has no instances to paste")]
    NoInstances,

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("RLE counts sum to {sum}, expected {expected}")]
    CountSumMismatch { sum: u64, expected: u64 },

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    BadVersion(u8),

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("{0} unexpected trailing bytes after payload")]
    TrailingData(usize),

    #[error("stored value {value} at flat index {index} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },

    #[error("{n_classes} classes cannot be stored in an 8-bit label image")]
    TooManyClasses { n_classes: usize },

    #[error("bad image: {0}")]
    BadImage(String),

    #[error("malformed scene: {0}")]
    MalformedScene(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
