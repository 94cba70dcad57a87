//! Differentiable multi-scale GLCM texture loss.
//!
//! Soft co-occurrence matrices built from Gaussian bin assignments, Haralick
//! descriptors over a grid of offsets, static or attention aggregation of the
//! descriptor discrepancies, and an analytic gradient back to pixel values.
//! The crate also carries the evaluation tools used around the loss: paired
//! quality metrics, template-matching analysis, perception-distortion ranking,
//! a pixel-space denoiser and a complexity benchmark.

pub mod aggregation;
pub mod analysis;
pub mod bench;
pub mod descriptors;
pub mod error;
pub mod glcm;
pub mod grad;
pub mod image;
pub mod io;
pub mod metrics;
pub mod mste;
pub mod optimize;
pub mod synth;

pub use aggregation::{AggregationRule, AttentionParams, RuleName, StaticRule};
pub use descriptors::DescriptorKind;
pub use error::{Error, Result};
pub use glcm::{BinGrid, Glcm, Offset};
pub use grad::{PixelGradient, TextureLoss};
pub use image::{HuWindow, Image, Interval};
pub use io::ImageFormat;
pub use mste::{DeltaH, GlcmMode, OffsetGrid, TextureRepr};
