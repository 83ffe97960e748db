use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: expected {expected} input channels, got {actual}")]
    ChannelMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer}: cannot pool odd spatial size {height}x{width}")]
    OddSpatialDim {
        layer: usize,
        height: usize,
        width: usize,
    },
    #[error("layer {layer}: unsupported layer kind code {code}")]
    UnsupportedLayer { layer: usize, code: u8 },
    #[error("layer {layer}: kernel larger than padded input")]
    EmptyOutput { layer: usize },
    #[error("layer {layer}: batch-norm flagged but parameters are missing or malformed")]
    MissingBNParams { layer: usize },
    #[error("layer {layer}: batch-norm must be folded first")]
    BatchNormNotFolded { layer: usize },
    #[error("layer {layer}: {what}")]
    InvalidWeights { layer: usize, what: String },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("scale exponent {0} outside 0..=30")]
    ScaleOutOfRange(i32),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("the final layer must be a convolution to carry the wide 32-bit head")]
    HeadNotConv,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer {layer}: INT32 accumulator overflow")]
    AccumulatorOverflow { layer: usize },
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) lies outside the image")]
    BoxOutsideImage {
        x_min: f32,
        y_min: f32,
        x_max: f32,
        y_max: f32,
    },
    #[error("class id {0} outside 0..5")]
    InvalidClass(usize),
    #[error("invalid identifier {0:?}: must match [a-z][a-z0-9_]*")]
    InvalidIdentifier(String),
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}:{line}:{column}: value {value} out of range for {target}")]
    Range {
        file: String,
        line: usize,
        column: usize,
        value: i64,
        target: &'static str,
    },
    #[error("malformed PPM: {0}")]
    MalformedPpm(String),
    #[error("unsupported PPM maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
    #[error("block size {block_size} exceeds buffer capacity {capacity}")]
    BlockTooLarge { block_size: usize, capacity: usize },
    #[error("block size must be positive")]
    ZeroBlockSize,
    #[error("image of {image_bytes} bytes does not fit the {capacity}-byte buffer")]
    ImageTooLarge { image_bytes: usize, capacity: usize },
    #[error("dataset is empty: {0}")]
    EmptyDataset(PathBuf),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}
