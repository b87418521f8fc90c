use alloc::string::String;

use crate::segmenter::Capability;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid raster dimensions {width}x{height} for {len} values")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("score {value} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("empty mask: {0}")]
    EmptyMask(&'static str),
    #[error("empty component has no bounding box")]
    EmptyComponent,
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}) for a {width}x{height} image")]
    InvalidBox { x_min: usize, y_min: usize, x_max: usize, y_max: usize, width: usize, height: usize },
    #[error("point ({x}, {y}) lies outside a {width}x{height} image")]
    PointOutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("metric {metric} is undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: &'static str },
    #[error("need {needed} samples, only {available} available")]
    InsufficientSamples { needed: usize, available: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed run-length encoding: {0}")]
    Rle(String),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmenterError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("protocol version mismatch: expected {expected}, peer speaks {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("segmenter did not declare the `{0}` capability")]
    MissingCapability(Capability),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("segmenter has no image registered as {0:?}")]
    UnknownImage(String),
    #[error("handshake has not been performed")]
    NotConnected,
    #[error("segmenter reported: {0}")]
    Remote(String),
}
