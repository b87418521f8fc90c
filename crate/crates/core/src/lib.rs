//! Allocation-only kernels for evaluating promptable segmenters.
//!
//! Everything in this crate is pure: masks and score maps, pixel-grid
//! primitives, the scoring suite, prompt synthesis from ground truth,
//! seeded prompt perturbation, and video/volume orchestration over an
//! abstract [`segmenter::Segmenter`]. IO, transports, file formats and the
//! command line live in the `segeval` crate.
//!
//! Coordinates are `(x, y)` with the origin at the top-left pixel; `x` is the
//! column and `y` the row. Boxes are half-open: `x_min <= x < x_max`.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod config;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod oracle;
pub mod perturb;
pub mod prompt;
pub mod prompt_sim;
pub mod raster;
pub mod rle;
pub mod segmenter;
pub mod sequence;
pub mod temporal;

pub use config::EvalConfig;
pub use error::{Error, Result, SegmenterError};
pub use mask::{BinaryMask, ScoreMap};
pub use prompt::{BoxPrompt, ImageRef, Label, PointPrompt, Prompt, PromptKind};
pub use sequence::{SequenceKind, SequenceRecord};
