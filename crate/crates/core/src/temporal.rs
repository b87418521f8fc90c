//! Video and volume orchestration: per-frame prompting, prompt propagation
//! from the previous prediction, multi-frame prompt schedules, and
//! bidirectional inference from an anchor slice.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::perturb::PromptMode;
use crate::prompt::Prompt;
use crate::prompt_sim::{box_prompt_run, ideal_boxes, ideal_click, run_boxes, simulate_clicks};
use crate::raster::Connectivity;
use crate::segmenter::{FramePrompt, Segmenter, SegmenterHandle};
use crate::sequence::{SequenceKind, SequenceRecord};

/// Frames that receive a ground-truth prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSchedule {
    pub prompted_frames: Vec<usize>,
    pub mode: PromptMode,
    pub k: usize,
}

/// `{0} ∪ {floor(len * i / k) : 1 <= i < k}`. A colliding index moves to the
/// next free one.
pub fn multiframe_schedule(seq_len: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || seq_len < k {
        return Err(Error::Precondition(format!("a {k}-frame schedule needs at least {k} frames, got {seq_len}")));
    }
    let mut out: Vec<usize> = Vec::with_capacity(k);
    for i in 0..k {
        let mut idx = seq_len * i / k;
        while out.contains(&idx) {
            idx += 1;
        }
        if idx >= seq_len {
            return Err(Error::Precondition(format!("no free frame for schedule slot {i}")));
        }
        out.push(idx);
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    Point,
    Box,
}

/// Prompt history for propagation: the sequence's initial ground-truth
/// prompt and the last prompt built from a nonempty prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationState {
    initial: Prompt,
    last: Option<Prompt>,
}

impl PropagationState {
    pub fn new(initial: Prompt) -> Self {
        Self { initial, last: None }
    }
}

/// Builds the next frame's prompt from the previous prediction: its most
/// interior pixel as one foreground click, or one box per component. An
/// empty prediction reuses the last propagated prompt, or the initial one.
pub fn propagate_prompt(
    prev_pred: &BinaryMask,
    mode: PropagationMode,
    connectivity: Connectivity,
    state: &mut PropagationState,
) -> Prompt {
    let fresh = match mode {
        PropagationMode::Point => ideal_click(prev_pred).map(|p| Prompt::points(alloc::vec![p])),
        PropagationMode::Box => Some(ideal_boxes(prev_pred, connectivity)).filter(|b| !b.is_empty()).map(Prompt::boxes),
    };
    match fresh {
        Some(p) => {
            state.last = Some(p.clone());
            p
        }
        None => state.last.clone().unwrap_or_else(|| state.initial.clone()),
    }
}

/// Ground-truth prompt of one frame; `None` when the frame has no foreground.
pub fn gt_prompt(gt: &BinaryMask, mode: PromptMode, connectivity: Connectivity) -> Option<Prompt> {
    if gt.is_blank() {
        return None;
    }
    Some(match mode {
        PromptMode::Point => Prompt::points(alloc::vec![ideal_click(gt)?]),
        PromptMode::Box => Prompt::boxes(ideal_boxes(gt, connectivity)),
        PromptMode::Mask => Prompt::mask(gt.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum VideoStrategy {
    /// Every frame prompted from its own ground truth, like a still image.
    PerFrameGt { mode: PropagationMode },
    PropagatedPoint,
    PropagatedBox,
    /// Ground-truth prompts on `k` scheduled frames; the segmenter's memory
    /// carries the object between them.
    Multiframe { k: usize, mode: PromptMode },
}

impl VideoStrategy {
    pub fn name(&self) -> String {
        match self {
            VideoStrategy::PerFrameGt { mode: PropagationMode::Point } => "per_frame_gt_point".into(),
            VideoStrategy::PerFrameGt { mode: PropagationMode::Box } => "per_frame_gt_box".into(),
            VideoStrategy::PropagatedPoint => "propagated_point".into(),
            VideoStrategy::PropagatedBox => "propagated_box".into(),
            VideoStrategy::Multiframe { k, mode } => format!("multiframe_{k}x_{mode:?}").to_lowercase(),
        }
    }
}

/// What a sequence run did, written next to its per-frame outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub strategy: String,
    /// Frames that received a ground-truth prompt, in frame order.
    pub schedule: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    /// Scheduled or per-frame prompts dropped because the frame's ground
    /// truth was empty (those frames predict nothing on their own).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_prompts: Vec<usize>,
    /// Frames predicted before a segmenter failure; `None` when complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SequenceManifest {
    fn new(strategy: String) -> Self {
        Self { strategy, schedule: Vec::new(), anchor: None, skipped_prompts: Vec::new(), completed_frames: None, failure: None }
    }

    pub fn partial(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    /// Carries exactly one prediction per frame. After a failure, frames past
    /// the failure point hold empty masks.
    pub record: SequenceRecord,
    pub manifest: SequenceManifest,
}

fn finish(seq: &SequenceRecord, mut preds: Vec<BinaryMask>, mut manifest: SequenceManifest, failure: Option<Error>) -> Result<SequenceRun> {
    if let Some(e) = failure {
        manifest.completed_frames = Some(preds.len());
        manifest.failure = Some(format!("{e}"));
        let (w, h) = seq.dims();
        preds.resize(seq.len(), BinaryMask::new(w, h));
    }
    Ok(SequenceRun { record: seq.clone().with_predictions(preds)?, manifest })
}

/// Runs a video with the given prompting strategy. Segmenter failures stop
/// the sequence and return a partial run rather than an error.
pub fn run_video<S: Segmenter + ?Sized>(
    seq: &SequenceRecord,
    strategy: VideoStrategy,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
) -> Result<SequenceRun> {
    if seq.kind() != SequenceKind::Video {
        return Err(Error::Precondition("run_video needs a video sequence".into()));
    }
    let dims = seq.dims();
    let frames = seq.frames();
    let mut manifest = SequenceManifest::new(strategy.name());
    let mut preds = Vec::with_capacity(seq.len());

    match strategy {
        VideoStrategy::PerFrameGt { mode } => {
            for (i, f) in frames.iter().enumerate() {
                if f.gt.is_blank() {
                    manifest.skipped_prompts.push(i);
                    preds.push(BinaryMask::new(dims.0, dims.1));
                    continue;
                }
                manifest.schedule.push(i);
                let out = match mode {
                    PropagationMode::Point => simulate_clicks(&f.gt, &f.image, seg, cfg).map(|r| r.0),
                    PropagationMode::Box => box_prompt_run(&f.gt, &f.image, seg, cfg.connectivity),
                };
                match out {
                    Ok(m) => preds.push(m),
                    Err(e) if is_segmenter_failure(&e) => return finish(seq, preds, manifest, Some(e)),
                    Err(e) => return Err(e),
                }
            }
        }
        VideoStrategy::PropagatedPoint | VideoStrategy::PropagatedBox => {
            let mode = if strategy == VideoStrategy::PropagatedPoint { PropagationMode::Point } else { PropagationMode::Box };
            let prompt_mode = if mode == PropagationMode::Point { PromptMode::Point } else { PromptMode::Box };
            let initial = gt_prompt(&frames[0].gt, prompt_mode, cfg.connectivity)
                .ok_or(Error::EmptyMask("propagation needs a nonempty first-frame ground truth"))?;
            manifest.schedule.push(0);
            let mut state = PropagationState::new(initial.clone());
            for (i, f) in frames.iter().enumerate() {
                let prompt = match preds.last() {
                    None => initial.clone(),
                    Some(prev) => propagate_prompt(prev, mode, cfg.connectivity, &mut state),
                };
                match query(&prompt, f, dims, seg) {
                    Ok(m) => preds.push(m),
                    Err(e) if is_segmenter_failure(&e) => return finish(seq, preds, manifest, Some(e)),
                    Err(e) => return Err(e),
                }
                debug_assert_eq!(preds.len(), i + 1);
            }
        }
        VideoStrategy::Multiframe { k, mode } => {
            seg.require(crate::segmenter::Capability::ContextMemory)?;
            let schedule = multiframe_schedule(seq.len(), k)?;
            let prompts = scheduled_prompts(seq, &schedule, mode, cfg.connectivity, |i| i, &mut manifest);
            if prompts.is_empty() {
                return Err(Error::EmptyMask("every scheduled frame has an empty ground truth"));
            }
            match seg.segment_sequence(&seq.images(), dims, &prompts) {
                Ok(masks) => preds = masks,
                Err(e) if is_segmenter_failure(&e) => return finish(seq, preds, manifest, Some(e)),
                Err(e) => return Err(e),
            }
        }
    }
    finish(seq, preds, manifest, None)
}

fn is_segmenter_failure(e: &Error) -> bool {
    matches!(e, Error::Segmenter(_))
}

/// One query per box (ORed), otherwise a single query.
fn query<S: Segmenter + ?Sized>(
    prompt: &Prompt,
    frame: &crate::sequence::Frame,
    dims: (usize, usize),
    seg: &mut SegmenterHandle<S>,
) -> Result<BinaryMask> {
    match &prompt.kind {
        crate::prompt::PromptKind::Boxes(b) if b.len() > 1 => run_boxes(b, &frame.image, dims, seg),
        _ => seg.segment_mask(&frame.image, dims, prompt),
    }
}

/// GT prompts for `schedule` (global frame indices), re-indexed with `local`.
fn scheduled_prompts(
    seq: &SequenceRecord,
    schedule: &[usize],
    mode: PromptMode,
    connectivity: Connectivity,
    local: impl Fn(usize) -> usize,
    manifest: &mut SequenceManifest,
) -> Vec<FramePrompt> {
    let mut out = Vec::new();
    for &i in schedule {
        match gt_prompt(&seq.frames()[i].gt, mode, connectivity) {
            Some(prompt) => {
                manifest.schedule.push(i);
                out.push(FramePrompt { frame: local(i), prompt });
            }
            None => manifest.skipped_prompts.push(i),
        }
    }
    out.sort_by_key(|p| p.frame);
    out
}

/// Slice with the largest ground-truth area; ties go to the lowest index.
pub fn anchor_slice(vol: &SequenceRecord) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, f) in vol.frames().iter().enumerate() {
        let a = f.gt.count();
        if a > 0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Bidirectional volume inference. Both halves start at the anchor slice:
/// forward over `anchor..len`, backward over `anchor..=0`. For `k > 1` the
/// full-volume schedule supplies extra prompted slices (slice 0 is replaced
/// by the anchor), each routed to the half that contains it. The anchor's
/// prediction comes from the forward half.
pub fn bidirectional_3d<S: Segmenter + ?Sized>(
    vol: &SequenceRecord,
    k: usize,
    mode: PromptMode,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
) -> Result<SequenceRun> {
    if vol.kind() != SequenceKind::Volume {
        return Err(Error::Precondition("bidirectional inference needs a volume".into()));
    }
    let anchor = anchor_slice(vol).ok_or(Error::EmptyMask("volume has no foreground slice"))?;
    seg.require(crate::segmenter::Capability::ContextMemory)?;
    let schedule = multiframe_schedule(vol.len(), k)?;
    let extras: Vec<usize> = schedule.into_iter().filter(|&i| i != 0 && i != anchor).collect();

    let mut manifest = SequenceManifest::new(format!("bidirectional_{k}x_{mode:?}").to_lowercase());
    manifest.anchor = Some(anchor);
    let dims = vol.dims();
    let images = vol.images();

    let mut fwd_sched = alloc::vec![anchor];
    fwd_sched.extend(extras.iter().copied().filter(|&i| i > anchor));
    let fwd_prompts = scheduled_prompts(vol, &fwd_sched, mode, cfg.connectivity, |i| i - anchor, &mut manifest);
    let forward = match seg.segment_sequence(&images[anchor..], dims, &fwd_prompts) {
        Ok(m) => m,
        Err(e) if is_segmenter_failure(&e) => return finish(vol, Vec::new(), manifest, Some(e)),
        Err(e) => return Err(e),
    };

    let mut backward = Vec::new();
    if anchor > 0 {
        let mut bwd_sched = alloc::vec![anchor];
        bwd_sched.extend(extras.iter().copied().filter(|&i| i < anchor));
        let mut scratch = SequenceManifest::new(String::new());
        let bwd_prompts = scheduled_prompts(vol, &bwd_sched, mode, cfg.connectivity, |i| anchor - i, &mut scratch);
        manifest.schedule.extend(scratch.schedule.into_iter().filter(|&i| i != anchor));
        manifest.skipped_prompts.extend(scratch.skipped_prompts);
        manifest.schedule.sort_unstable();
        manifest.skipped_prompts.sort_unstable();
        let rev: Vec<_> = images[..=anchor].iter().rev().cloned().collect();
        backward = match seg.segment_sequence(&rev, dims, &bwd_prompts) {
            Ok(m) => m,
            Err(e) if is_segmenter_failure(&e) => return finish(vol, Vec::new(), manifest, Some(e)),
            Err(e) => return Err(e),
        };
    }

    let preds: Vec<BinaryMask> = (0..vol.len())
        .map(|i| if i >= anchor { forward[i - anchor].clone() } else { backward[anchor - i].clone() })
        .collect();
    finish(vol, preds, manifest, None)
}
