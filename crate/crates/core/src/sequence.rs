use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::prompt::ImageRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Video,
    Volume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub image: ImageRef,
    pub gt: BinaryMask,
}

/// Ordered video frames or volume slices sharing one raster size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    kind: SequenceKind,
    frames: Vec<Frame>,
    predictions: Option<Vec<BinaryMask>>,
}

impl SequenceRecord {
    pub fn new(kind: SequenceKind, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::InsufficientSamples { needed: 1, available: 0 })?;
        let dims = first.gt.dims();
        for f in &frames {
            crate::mask::check_dims(dims, f.gt.dims())?;
        }
        Ok(Self { kind, frames, predictions: None })
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].gt.dims()
    }

    pub fn images(&self) -> Vec<ImageRef> {
        self.frames.iter().map(|f| f.image.clone()).collect()
    }

    pub fn predictions(&self) -> Option<&[BinaryMask]> {
        self.predictions.as_deref()
    }

    /// Attaches one prediction per frame.
    pub fn with_predictions(mut self, predictions: Vec<BinaryMask>) -> Result<Self> {
        if predictions.len() != self.frames.len() {
            return Err(Error::Precondition(alloc::format!(
                "{} predictions for {} frames",
                predictions.len(),
                self.frames.len()
            )));
        }
        let dims = self.dims();
        for p in &predictions {
            crate::mask::check_dims(dims, p.dims())?;
        }
        self.predictions = Some(predictions);
        Ok(self)
    }
}
