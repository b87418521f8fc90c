//! Deterministic reference segmenters that answer from ground truth.
//!
//! They let every pipeline run without a model: [`GtOracle`] behaves like an
//! ideal promptable segmenter, [`GtEchoOracle`] returns the ground truth no
//! matter the prompt (and supports sequences), [`NoisyOracle`] starts from a
//! perturbed mask and improves with each click, [`EverythingOracle`] adds
//! distractor entities for the overlap filter, and [`EmptyOracle`] never finds
//! anything.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::SegmenterError;
use crate::mask::BinaryMask;
use crate::perturb::substream;
use crate::prompt::{ImageRef, Label, PromptKind};
use crate::raster::{connected_components, morph, ComponentSet, Connectivity, MorphOp};
use crate::segmenter::{Capability, Handshake, SegmentRequest, SegmentResponse, Segmenter, SequenceRequest};

/// Ground-truth masks keyed by image reference.
pub type GtStore = BTreeMap<ImageRef, BinaryMask>;

/// Oracles keep no state between requests, so any number of independent
/// sessions can run side by side.
const ORACLE_SESSIONS: u32 = 256;

const BASIC: [Capability; 4] = [Capability::Points, Capability::Boxes, Capability::Mask, Capability::Everything];

fn lookup<'a>(store: &'a GtStore, image: &ImageRef, dims: (usize, usize)) -> Result<&'a BinaryMask, SegmenterError> {
    let gt = store.get(image).ok_or_else(|| SegmenterError::UnknownImage(image.0.clone()))?;
    if gt.dims() != dims {
        return Err(SegmenterError::Malformed(alloc::format!(
            "request says {}x{}, image {} is {}x{}",
            dims.0,
            dims.1,
            image,
            gt.width(),
            gt.height()
        )));
    }
    Ok(gt)
}

fn union_of_labels(cs: &ComponentSet, labels: &[u32], dims: (usize, usize)) -> BinaryMask {
    let bits = cs.label_map().iter().map(|l| *l != 0 && labels.contains(l)).collect();
    BinaryMask::from_bits(dims.0, dims.1, bits).expect("dims match")
}

/// Idealized segmenter answering from ground truth.
///
/// * points: union of the GT components under foreground points, minus any
///   component under a background point;
/// * boxes: union of `GT ∩ box`;
/// * mask: union of the GT components the mask touches;
/// * everything: the GT components as separate entities.
#[derive(Debug, Clone)]
pub struct GtOracle {
    store: Arc<GtStore>,
    connectivity: Connectivity,
}

impl GtOracle {
    pub fn new(store: impl Into<Arc<GtStore>>) -> Self {
        Self { store: store.into(), connectivity: Connectivity::Eight }
    }

    pub fn with_connectivity(mut self, connectivity: Connectivity) -> Self {
        self.connectivity = connectivity;
        self
    }

    pub(crate) fn answer(&self, req: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        let dims = (req.width, req.height);
        let gt = lookup(&self.store, &req.image, dims)?;
        let cs = connected_components(gt, self.connectivity);
        Ok(match &req.prompt.kind {
            PromptKind::Points(points) => {
                let mut keep: Vec<u32> = Vec::new();
                let mut drop: Vec<u32> = Vec::new();
                for p in points {
                    let l = cs.label_at(p.x, p.y);
                    if l != 0 {
                        match p.label {
                            Label::Foreground => keep.push(l),
                            Label::Background => drop.push(l),
                        }
                    }
                }
                keep.retain(|l| !drop.contains(l));
                SegmentResponse::Mask(union_of_labels(&cs, &keep, dims))
            }
            PromptKind::Boxes(boxes) => {
                let m = BinaryMask::from_fn(dims.0, dims.1, |x, y| gt.get(x, y) && boxes.iter().any(|b| b.contains(x, y)));
                SegmentResponse::Mask(m)
            }
            PromptKind::Mask(prompt) => {
                let mut touched: Vec<u32> = prompt.foreground().map(|(x, y)| cs.label_at(x, y)).filter(|&l| l != 0).collect();
                touched.dedup();
                SegmentResponse::Mask(union_of_labels(&cs, &touched, dims))
            }
            PromptKind::Everything => SegmentResponse::Entities(cs.masks()),
        })
    }
}

impl Segmenter for GtOracle {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        Ok(Handshake::new("oracle:gt", &BASIC).with_max_sessions(ORACLE_SESSIONS))
    }

    fn segment(&mut self, request: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        self.answer(request)
    }
}

/// Returns the ground truth for every request, including whole sequences.
#[derive(Debug, Clone)]
pub struct GtEchoOracle {
    store: Arc<GtStore>,
}

impl GtEchoOracle {
    pub fn new(store: impl Into<Arc<GtStore>>) -> Self {
        Self { store: store.into() }
    }
}

impl Segmenter for GtEchoOracle {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        let mut caps = BASIC.to_vec();
        caps.push(Capability::ContextMemory);
        Ok(Handshake::new("oracle:gt-echo", &caps).with_max_sessions(ORACLE_SESSIONS))
    }

    fn segment(&mut self, req: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        let gt = lookup(&self.store, &req.image, (req.width, req.height))?.clone();
        Ok(match req.prompt.kind {
            PromptKind::Everything if req.prompt.context.is_empty() => SegmentResponse::Entities(alloc::vec![gt]),
            _ => SegmentResponse::Mask(gt),
        })
    }

    fn segment_sequence(&mut self, req: &SequenceRequest) -> Result<Vec<BinaryMask>, SegmenterError> {
        req.frames
            .iter()
            .map(|f| lookup(&self.store, f, (req.width, req.height)).cloned())
            .collect()
    }
}

/// Ground truth blurred by a seeded erosion or dilation of 1–5 steps; every
/// click after the first removes one step, so the sixth click is exact.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    store: Arc<GtStore>,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(store: impl Into<Arc<GtStore>>, seed: u64) -> Self {
        Self { store: store.into(), seed }
    }

    /// The distortion applied to `image` before any refinement.
    pub fn distortion(&self, image: &ImageRef) -> (MorphOp, u32) {
        let mut rng = substream(self.seed, 0, image.as_str());
        let op = if rng.gen_bool(0.5) { MorphOp::Erode } else { MorphOp::Dilate };
        (op, rng.gen_range(1..=5))
    }
}

impl Segmenter for NoisyOracle {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        Ok(Handshake::new("oracle:noisy", &BASIC[..3]).with_max_sessions(ORACLE_SESSIONS))
    }

    fn segment(&mut self, req: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        let gt = lookup(&self.store, &req.image, (req.width, req.height))?;
        let clicks = match &req.prompt.kind {
            PromptKind::Points(p) => p.len() as u32,
            _ => 1,
        };
        let (op, steps) = self.distortion(&req.image);
        Ok(SegmentResponse::Mask(morph(gt, op, steps.saturating_sub(clicks.saturating_sub(1)))))
    }
}

/// [`GtOracle`] whose everything mode also returns two 3×3 distractor blobs
/// lying entirely in the background.
#[derive(Debug, Clone)]
pub struct EverythingOracle {
    inner: GtOracle,
}

impl EverythingOracle {
    pub fn new(store: impl Into<Arc<GtStore>>) -> Self {
        Self { inner: GtOracle::new(store) }
    }
}

/// Up to two 3×3 windows of pure background: the first and the last in
/// row-major order (the last one must not overlap the first).
pub fn distractors(gt: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = gt.dims();
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let clear = |x0: usize, y0: usize| (y0..y0 + 3).all(|y| (x0..x0 + 3).all(|x| !gt.get(x, y)));
    let windows: Vec<(usize, usize)> = (0..=h - 3)
        .flat_map(|y| (0..=w - 3).map(move |x| (x, y)))
        .filter(|&(x, y)| clear(x, y))
        .collect();
    let mut out = Vec::new();
    let Some(&first) = windows.first() else { return out };
    let blob = |(x0, y0): (usize, usize)| {
        BinaryMask::from_fn(w, h, |x, y| (x0..x0 + 3).contains(&x) && (y0..y0 + 3).contains(&y))
    };
    out.push(blob(first));
    if let Some(&last) = windows
        .iter()
        .rev()
        .find(|&&(x, y)| x.abs_diff(first.0) >= 3 || y.abs_diff(first.1) >= 3)
    {
        out.push(blob(last));
    }
    out
}

impl Segmenter for EverythingOracle {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        Ok(Handshake::new("oracle:everything", &BASIC).with_max_sessions(ORACLE_SESSIONS))
    }

    fn segment(&mut self, req: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        match self.inner.answer(req)? {
            SegmentResponse::Entities(mut entities) => {
                let gt = lookup(&self.inner.store, &req.image, (req.width, req.height))?;
                entities.extend(distractors(gt));
                Ok(SegmentResponse::Entities(entities))
            }
            other => Ok(other),
        }
    }
}

/// Always answers with an empty mask (or no entities).
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyOracle;

impl Segmenter for EmptyOracle {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        Ok(Handshake::new("oracle:empty", &BASIC).with_max_sessions(ORACLE_SESSIONS))
    }

    fn segment(&mut self, req: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        Ok(match req.prompt.kind {
            PromptKind::Everything => SegmentResponse::Entities(Vec::new()),
            _ => SegmentResponse::Mask(BinaryMask::new(req.width, req.height)),
        })
    }
}
