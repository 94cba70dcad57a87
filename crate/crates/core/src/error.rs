use std::path::PathBuf;

use thiserror::Error;

use crate::descriptors::DescriptorKind;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while decoding one of the supported image formats.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("missing sidecar {0}")]
    MissingSidecar(PathBuf),
    #[error("invalid sidecar: {0}")]
    InvalidSidecar(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("value {value} does not fit the {format} bit depth")]
    RangeOverflow { value: f64, format: &'static str },
    #[error("degenerate GLCM at d={d}, theta={theta}: no valid pixel pairs")]
    DegenerateGlcm { d: f64, theta: f64 },
    #[error("soft assignment underflow for pixel value {0}")]
    NumericallyDegenerate(f64),
    #[error("{kind:?} is undefined for this GLCM (zero marginal variance)")]
    UndefinedDescriptor { kind: DescriptorKind },
    #[error("descriptor {kind:?} undefined at d={d}, theta={theta}")]
    UndefinedDescriptorAt {
        kind: DescriptorKind,
        d: f64,
        theta: f64,
    },
    #[error("texture representations were built on different grids or descriptors")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NumericOverflow(&'static str),
    #[error("optimization diverged at step {step}")]
    Diverged { step: usize },
    #[error("kernel density estimate needs at least two distinct samples")]
    DegenerateKde,
    #[error("image {width}x{height} is too small for a {t}x{t} template")]
    ImageTooSmall { width: usize, height: usize, t: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
