//! Prompt types sent to a segmenter.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Opaque identifier of an image or frame, resolved by the segmenter side
/// (typically a dataset-relative path).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl ImageRef {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageRef {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: usize,
    pub y: usize,
    pub label: Label,
}

impl PointPrompt {
    pub fn foreground(x: usize, y: usize) -> Self {
        Self { x, y, label: Label::Foreground }
    }

    pub fn background(x: usize, y: usize) -> Self {
        Self { x, y, label: Label::Background }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x < width && self.y < height {
            Ok(())
        } else {
            Err(Error::PointOutOfBounds { x: self.x, y: self.y, width, height })
        }
    }
}

/// Half-open axis-aligned box: covers `x_min <= x < x_max`, `y_min <= y < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoxPrompt {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x_min < self.x_max && self.y_min < self.y_max && self.x_max <= width && self.y_max <= height {
            Ok(())
        } else {
            Err(Error::InvalidBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
                width,
                height,
            })
        }
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PromptKind {
    Points(Vec<PointPrompt>),
    Boxes(Vec<BoxPrompt>),
    Mask(BinaryMask),
    Everything,
}

impl PromptKind {
    pub fn name(&self) -> &'static str {
        match self {
            PromptKind::Points(_) => "points",
            PromptKind::Boxes(_) => "boxes",
            PromptKind::Mask(_) => "mask",
            PromptKind::Everything => "everything",
        }
    }
}

/// An exemplar `(image, mask)` pair used as in-context guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextExemplar {
    pub image: ImageRef,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    #[serde(flatten)]
    pub kind: PromptKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<ContextExemplar>,
}

impl Prompt {
    pub fn points(points: Vec<PointPrompt>) -> Self {
        Self { kind: PromptKind::Points(points), context: Vec::new() }
    }

    pub fn boxes(boxes: Vec<BoxPrompt>) -> Self {
        Self { kind: PromptKind::Boxes(boxes), context: Vec::new() }
    }

    pub fn mask(mask: BinaryMask) -> Self {
        Self { kind: PromptKind::Mask(mask), context: Vec::new() }
    }

    pub fn everything() -> Self {
        Self { kind: PromptKind::Everything, context: Vec::new() }
    }

    pub fn with_context(mut self, context: Vec<ContextExemplar>) -> Self {
        self.context = context;
        self
    }

    /// Checks the prompt against an image of the given size: coordinates in
    /// bounds, boxes non-degenerate, point and box lists nonempty, mask
    /// dimensions matching.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        match &self.kind {
            PromptKind::Points(points) => {
                if points.is_empty() {
                    return Err(Error::Precondition("point prompt without points".into()));
                }
                points.iter().try_for_each(|p| p.validate(width, height))
            }
            PromptKind::Boxes(boxes) => {
                if boxes.is_empty() {
                    return Err(Error::Precondition("box prompt without boxes".into()));
                }
                boxes.iter().try_for_each(|b| b.validate(width, height))
            }
            PromptKind::Mask(m) => crate::mask::check_dims((width, height), m.dims()),
            PromptKind::Everything => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation() {
        assert!(BoxPrompt::new(0, 0, 4, 4).validate(4, 4).is_ok());
        assert!(BoxPrompt::new(2, 0, 2, 4).validate(4, 4).is_err());
        assert!(BoxPrompt::new(0, 0, 5, 4).validate(4, 4).is_err());
    }

    #[test]
    fn prompt_validation() {
        assert!(Prompt::points(vec![PointPrompt::foreground(3, 3)]).validate(4, 4).is_ok());
        assert!(Prompt::points(vec![PointPrompt::foreground(4, 0)]).validate(4, 4).is_err());
        assert!(Prompt::points(vec![]).validate(4, 4).is_err());
        assert!(Prompt::mask(BinaryMask::new(3, 4)).validate(4, 4).is_err());
        assert!(Prompt::everything().validate(1, 1).is_ok());
    }
}
