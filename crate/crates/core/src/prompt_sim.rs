//! Ideal prompts synthesized from ground truth, and the basic
//! prediction-generation modes built on them: iterative clicking, per-region
//! boxes, mask prompts, and everything mode with overlap filtering.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::metrics::Confusion;
use crate::prompt::{BoxPrompt, ContextExemplar, ImageRef, Label, PointPrompt, Prompt};
use crate::raster::{connected_components, distance_to_background, overlap_fraction, Connectivity};
use crate::segmenter::{Segmenter, SegmenterHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    IouReached,
    ClickLimit,
    /// Every pixel of both error regions already holds a click of the matching
    /// label, so no new click can be placed.
    NoCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub point: PointPrompt,
    pub iou_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickLog {
    pub clicks: Vec<ClickRecord>,
    pub stop_reason: StopReason,
}

impl ClickLog {
    pub fn points(&self) -> Vec<PointPrompt> {
        self.clicks.iter().map(|c| c.point).collect()
    }

    pub fn final_iou(&self) -> f64 {
        self.clicks.last().map_or(0.0, |c| c.iou_after)
    }
}

/// The pixel of `region` farthest from its background, skipping pixels that
/// already carry a click with `label`. Ties go to the first pixel in
/// row-major order.
fn farthest_free_pixel(region: &BinaryMask, label: Label, taken: &[PointPrompt]) -> Option<PointPrompt> {
    let dist = distance_to_background(region);
    let w = region.width();
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in dist.values().iter().enumerate() {
        if d <= 0.0 || best.is_some_and(|(_, b)| d <= b) {
            continue;
        }
        let (x, y) = (i % w, i / w);
        if taken.iter().any(|p| p.x == x && p.y == y && p.label == label) {
            continue;
        }
        best = Some((i, d));
    }
    best.map(|(i, _)| PointPrompt { x: i % w, y: i / w, label })
}

/// Single ideal click for a mask: its most interior foreground pixel.
pub fn ideal_click(gt: &BinaryMask) -> Option<PointPrompt> {
    distance_to_background(gt).argmax().map(|(x, y)| PointPrompt::foreground(x, y))
}

/// Picks the next corrective click against the current prediction: inside
/// the larger of the false-negative and false-positive regions (false
/// negatives win ties), at the pixel farthest from that region's boundary.
pub fn next_click(gt: &BinaryMask, pred: &BinaryMask, taken: &[PointPrompt]) -> Result<Option<PointPrompt>> {
    let missed = gt.and_not(pred)?;
    let extra = pred.and_not(gt)?;
    let (first, second) = if missed.count() >= extra.count() {
        ((&missed, Label::Foreground), (&extra, Label::Background))
    } else {
        ((&extra, Label::Background), (&missed, Label::Foreground))
    };
    Ok(farthest_free_pixel(first.0, first.1, taken).or_else(|| farthest_free_pixel(second.0, second.1, taken)))
}

/// Interactive click simulation. Starts from an empty prediction, adds one
/// corrective click at a time, and re-queries the segmenter with the whole
/// click list until IoU reaches `cfg.iou_stop` or `cfg.click_limit` clicks
/// have been placed.
pub fn simulate_clicks<S: Segmenter + ?Sized>(
    gt: &BinaryMask,
    image: &ImageRef,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
) -> Result<(BinaryMask, ClickLog)> {
    simulate_clicks_with(gt, image, seg, cfg, |p| p)
}

/// [`simulate_clicks`] with a hook that may move each click after it is
/// chosen (used to jitter clicks during robustness trials).
pub fn simulate_clicks_with<S: Segmenter + ?Sized>(
    gt: &BinaryMask,
    image: &ImageRef,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
    mut adjust: impl FnMut(PointPrompt) -> PointPrompt,
) -> Result<(BinaryMask, ClickLog)> {
    if gt.is_blank() {
        return Err(Error::EmptyMask("click simulation needs a nonempty ground truth"));
    }
    let dims = gt.dims();
    let mut pred = BinaryMask::new(dims.0, dims.1);
    let mut points: Vec<PointPrompt> = Vec::new();
    let mut clicks = Vec::new();
    let stop_reason = loop {
        let Some(click) = next_click(gt, &pred, &points)? else {
            break StopReason::NoCandidate;
        };
        points.push(adjust(click));
        pred = seg.segment_mask(image, dims, &Prompt::points(points.clone()))?;
        let iou = Confusion::of(&pred, gt)?.iou();
        clicks.push(ClickRecord { point: *points.last().expect("just pushed"), iou_after: iou });
        if iou >= cfg.iou_stop {
            break StopReason::IouReached;
        }
        if clicks.len() >= cfg.click_limit as usize {
            break StopReason::ClickLimit;
        }
    };
    Ok((pred, ClickLog { clicks, stop_reason }))
}

/// One tight box per connected ground-truth region, in label order.
pub fn ideal_boxes(gt: &BinaryMask, connectivity: Connectivity) -> Vec<BoxPrompt> {
    connected_components(gt, connectivity).boxes()
}

/// Queries each box on its own and ORs the returned masks.
pub fn run_boxes<S: Segmenter + ?Sized>(
    boxes: &[BoxPrompt],
    image: &ImageRef,
    dims: (usize, usize),
    seg: &mut SegmenterHandle<S>,
) -> Result<BinaryMask> {
    let mut out = BinaryMask::new(dims.0, dims.1);
    for b in boxes {
        let m = seg.segment_mask(image, dims, &Prompt::boxes(alloc::vec![*b]))?;
        out = out.or(&m)?;
    }
    Ok(out)
}

/// Box mode: one box per ground-truth region, predictions merged by OR.
pub fn box_prompt_run<S: Segmenter + ?Sized>(
    gt: &BinaryMask,
    image: &ImageRef,
    seg: &mut SegmenterHandle<S>,
    connectivity: Connectivity,
) -> Result<BinaryMask> {
    if gt.is_blank() {
        return Err(Error::EmptyMask("box prompts need a nonempty ground truth"));
    }
    run_boxes(&ideal_boxes(gt, connectivity), image, gt.dims(), seg)
}

/// Keeps entities whose overlap with `gt` is strictly greater than
/// `threshold` and merges them by OR. Empty entities are never kept.
pub fn ofs_filter(entities: &[BinaryMask], gt: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    let mut out = BinaryMask::new(gt.width(), gt.height());
    for e in entities {
        e.ensure_same_dims(gt)?;
        if e.is_blank() {
            continue;
        }
        if overlap_fraction(e, gt)? > threshold {
            out = out.or(e)?;
        }
    }
    Ok(out)
}

/// Everything mode followed by overlap filtering against the ground truth.
pub fn everything_run<S: Segmenter + ?Sized>(
    gt: &BinaryMask,
    image: &ImageRef,
    seg: &mut SegmenterHandle<S>,
    threshold: f64,
) -> Result<BinaryMask> {
    let entities = seg.segment_entities(image, gt.dims())?;
    ofs_filter(&entities, gt, threshold)
}

/// Sends a mask prompt verbatim and returns the segmenter's answer.
pub fn mask_prompt_run<S: Segmenter + ?Sized>(
    prompt_mask: &BinaryMask,
    image: &ImageRef,
    seg: &mut SegmenterHandle<S>,
) -> Result<BinaryMask> {
    if prompt_mask.is_blank() {
        return Err(Error::EmptyMask("mask prompt"));
    }
    seg.segment_mask(image, prompt_mask.dims(), &Prompt::mask(prompt_mask.clone()))
}

/// The first `k` training samples, in dataset order, as context exemplars.
pub fn icl_context(train: &[(ImageRef, BinaryMask)], k: usize) -> Result<Vec<ContextExemplar>> {
    if train.len() < k {
        return Err(Error::InsufficientSamples { needed: k, available: train.len() });
    }
    Ok(train[..k].iter().map(|(image, mask)| ContextExemplar { image: image.clone(), mask: mask.clone() }).collect())
}

/// In-context mode: no prompt on the target image, only the exemplars.
pub fn icl_run<S: Segmenter + ?Sized>(
    image: &ImageRef,
    dims: (usize, usize),
    context: &[ContextExemplar],
    seg: &mut SegmenterHandle<S>,
) -> Result<BinaryMask> {
    if context.is_empty() {
        return Err(Error::Precondition("in-context mode needs at least one exemplar".into()));
    }
    seg.segment_mask(image, dims, &Prompt::everything().with_context(context.to_vec()))
}
