//! Seeded prompt perturbation and repeat-trial statistics.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, trial, sample id)`, so results never depend on which worker ran a
//! sample or in which order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, PointJitterMode};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ScoreMap};
use crate::metrics::{score_binary, score_dataset, MetricId, MetricValue, Polarity};
use crate::prompt::{BoxPrompt, ImageRef, PointPrompt, Prompt};
use crate::prompt_sim::{ideal_boxes, mask_prompt_run, run_boxes, simulate_clicks, simulate_clicks_with};
use crate::raster::{morph, MorphOp};
use crate::segmenter::{Segmenter, SegmenterHandle};

/// 64-bit FNV-1a.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent deterministic stream for one `(seed, trial, sample)` triple.
pub fn substream(seed: u64, trial: u32, sample_id: &str) -> ChaCha8Rng {
    let mut state = seed ^ stable_hash(sample_id.as_bytes()).rotate_left(17) ^ ((trial as u64) << 40 | trial as u64);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Shifts a point by independent uniform integer offsets in
/// `[-max_shift, max_shift]` per axis, then clamps it into the image.
pub fn jitter_point<R: Rng + ?Sized>(p: PointPrompt, dims: (usize, usize), max_shift: u32, rng: &mut R) -> PointPrompt {
    let m = max_shift as i64;
    let dx = rng.gen_range(-m..=m);
    let dy = rng.gen_range(-m..=m);
    PointPrompt {
        x: (p.x as i64 + dx).clamp(0, dims.0 as i64 - 1) as usize,
        y: (p.y as i64 + dy).clamp(0, dims.1 as i64 - 1) as usize,
        label: p.label,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxJitter {
    pub bbox: BoxPrompt,
    /// An edge pair crossed and was pushed apart to a one-pixel extent.
    pub corrected: bool,
}

/// Largest edge shift for a box: `floor(percent / 100 * shorter side)`.
pub fn box_margin(b: &BoxPrompt, max_percent: u32) -> usize {
    b.width().min(b.height()) * max_percent as usize / 100
}

/// Moves each box edge by its own uniform integer offset in `[-m, m]`
/// (see [`box_margin`]) and clamps the result into the image.
pub fn jitter_box<R: Rng + ?Sized>(b: &BoxPrompt, dims: (usize, usize), max_percent: u32, rng: &mut R) -> BoxJitter {
    let m = box_margin(b, max_percent) as i64;
    let mut shift = |v: usize, limit: usize| (v as i64 + rng.gen_range(-m..=m)).clamp(0, limit as i64) as usize;
    let x_min = shift(b.x_min, dims.0);
    let y_min = shift(b.y_min, dims.1);
    let x_max = shift(b.x_max, dims.0);
    let y_max = shift(b.y_max, dims.1);
    let (x_min, x_max, cx) = restore_extent(x_min, x_max, dims.0);
    let (y_min, y_max, cy) = restore_extent(y_min, y_max, dims.1);
    BoxJitter { bbox: BoxPrompt { x_min, y_min, x_max, y_max }, corrected: cx || cy }
}

fn restore_extent(lo: usize, hi: usize, limit: usize) -> (usize, usize, bool) {
    if lo < hi {
        (lo, hi, false)
    } else if lo < limit {
        (lo, lo + 1, true)
    } else {
        (limit - 1, limit, true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskJitter {
    pub mask: BinaryMask,
    pub op: MorphOp,
    pub iterations: u32,
    /// Erosion emptied the mask and the original was kept instead.
    pub fallback: bool,
}

/// Erodes or dilates (chosen uniformly) a uniform `1..=max_iterations` times.
/// `max_iterations == 0` leaves the mask untouched.
pub fn morph_perturb_mask<R: Rng + ?Sized>(m: &BinaryMask, max_iterations: u32, rng: &mut R) -> Result<MaskJitter> {
    if m.is_blank() {
        return Err(Error::EmptyMask("mask perturbation"));
    }
    let op = if rng.gen_bool(0.5) { MorphOp::Erode } else { MorphOp::Dilate };
    let iterations = if max_iterations == 0 { 0 } else { rng.gen_range(1..=max_iterations) };
    let out = morph(m, op, iterations);
    Ok(if out.is_blank() {
        MaskJitter { mask: m.clone(), op, iterations, fallback: true }
    } else {
        MaskJitter { mask: out, op, iterations, fallback: false }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Point,
    Box,
    Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageRef,
    pub gt: BinaryMask,
}

/// The unperturbed prompts of one sample and the prediction they produced.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealRun {
    pub prompt: Prompt,
    pub prediction: BinaryMask,
}

/// Runs the ideal (ground-truth derived) prompt of `mode` on one sample.
pub fn ideal_run<S: Segmenter + ?Sized>(
    sample: &Sample,
    mode: PromptMode,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
) -> Result<IdealRun> {
    match mode {
        PromptMode::Point => {
            let (prediction, log) = simulate_clicks(&sample.gt, &sample.image, seg, cfg)?;
            Ok(IdealRun { prompt: Prompt::points(log.points()), prediction })
        }
        PromptMode::Box => {
            if sample.gt.is_blank() {
                return Err(Error::EmptyMask("box prompts need a nonempty ground truth"));
            }
            let boxes = ideal_boxes(&sample.gt, cfg.connectivity);
            let prediction = run_boxes(&boxes, &sample.image, sample.gt.dims(), seg)?;
            Ok(IdealRun { prompt: Prompt::boxes(boxes), prediction })
        }
        PromptMode::Mask => {
            let prediction = mask_prompt_run(&sample.gt, &sample.image, seg)?;
            Ok(IdealRun { prompt: Prompt::mask(sample.gt.clone()), prediction })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbEventKind {
    BoxCorrected,
    MaskFallback,
}

/// A perturbation that could not be applied as drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbEvent {
    pub sample: String,
    pub trial: u32,
    pub kind: PerturbEventKind,
}

/// Predictions of one sample under each trial's perturbed prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrials {
    pub id: String,
    /// One per completed trial, in trial order.
    pub predictions: Vec<BinaryMask>,
    pub events: Vec<PerturbEvent>,
    /// Set when a trial failed; later trials were not attempted.
    pub failure: Option<String>,
}

/// Perturbs the ideal prompt of `sample` once per trial (`1..=cfg.n_trials`)
/// and records the segmenter's answer.
pub fn sample_trials<S: Segmenter + ?Sized>(
    sample: &Sample,
    ideal: &IdealRun,
    mode: PromptMode,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
) -> SampleTrials {
    let mut out = SampleTrials { id: sample.id.clone(), predictions: Vec::new(), events: Vec::new(), failure: None };
    for trial in 1..=cfg.n_trials {
        let mut rng = substream(cfg.rng_seed, trial, &sample.id);
        match perturbed_prediction(sample, ideal, mode, seg, cfg, trial, &mut rng, &mut out.events) {
            Ok(pred) => out.predictions.push(pred),
            Err(e) => {
                out.failure = Some(format!("trial {trial}: {e}"));
                break;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn perturbed_prediction<S: Segmenter + ?Sized>(
    sample: &Sample,
    ideal: &IdealRun,
    mode: PromptMode,
    seg: &mut SegmenterHandle<S>,
    cfg: &EvalConfig,
    trial: u32,
    rng: &mut ChaCha8Rng,
    events: &mut Vec<PerturbEvent>,
) -> Result<BinaryMask> {
    let dims = sample.gt.dims();
    let event = |kind| PerturbEvent { sample: sample.id.clone(), trial, kind };
    match (mode, &ideal.prompt.kind) {
        (PromptMode::Point, crate::prompt::PromptKind::Points(points)) => match cfg.point_jitter_mode {
            PointJitterMode::RecordedClicks => {
                let jittered = points.iter().map(|&p| jitter_point(p, dims, cfg.point_max_shift, rng)).collect();
                seg.segment_mask(&sample.image, dims, &Prompt::points(jittered))
            }
            PointJitterMode::FullLoop => {
                let adjust = |p| jitter_point(p, dims, cfg.point_max_shift, rng);
                simulate_clicks_with(&sample.gt, &sample.image, seg, cfg, adjust).map(|(m, _)| m)
            }
        },
        (PromptMode::Box, crate::prompt::PromptKind::Boxes(boxes)) => {
            let mut jittered = Vec::with_capacity(boxes.len());
            for b in boxes {
                let j = jitter_box(b, dims, cfg.box_max_percent, rng);
                if j.corrected {
                    events.push(event(PerturbEventKind::BoxCorrected));
                }
                jittered.push(j.bbox);
            }
            run_boxes(&jittered, &sample.image, dims, seg)
        }
        (PromptMode::Mask, crate::prompt::PromptKind::Mask(m)) => {
            let j = morph_perturb_mask(m, cfg.morph_max_iterations, rng)?;
            if j.fallback {
                events.push(event(PerturbEventKind::MaskFallback));
            }
            mask_prompt_run(&j.mask, &sample.image, seg)
        }
        (mode, kind) => Err(Error::Precondition(format!(
            "{mode:?} trials need an ideal {mode:?} prompt, got {}",
            kind.name()
        ))),
    }
}

/// Mean ± population std of one metric over trials, and the relative change
/// against the ideal-prompt value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub metric: MetricId,
    pub polarity: Polarity,
    pub ideal: f64,
    pub mean: f64,
    pub std: f64,
    pub n_trials: u32,
    /// `(mean - ideal) / |ideal|`; absent when `ideal == 0`.
    pub delta: Option<f64>,
}

impl TrialStats {
    /// True when the change is in the metric's bad direction.
    pub fn degraded(&self) -> bool {
        match (self.delta, self.polarity) {
            (Some(d), Polarity::HigherBetter) => d < 0.0,
            (Some(d), Polarity::LowerBetter) => d > 0.0,
            (None, _) => false,
        }
    }
}

pub fn relative_change(mean: f64, ideal: f64) -> Option<f64> {
    (ideal != 0.0).then(|| (mean - ideal) / ideal.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub stats: Vec<TrialStats>,
    pub events: Vec<PerturbEvent>,
    /// Trials scored for every sample; fewer than `cfg.n_trials` when a
    /// failure cut the set short.
    pub completed_trials: u32,
    pub failures: Vec<String>,
}

impl TrialReport {
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Scores every completed trial and summarizes per metric. `baseline` holds
/// the ideal-prompt values for the same sample set.
pub fn summarize_trials(
    samples: &[Sample],
    trials: &[SampleTrials],
    baseline: &[MetricValue],
    metrics: &[MetricId],
    cfg: &EvalConfig,
) -> Result<TrialReport> {
    if samples.len() != trials.len() || samples.iter().zip(trials).any(|(s, t)| s.id != t.id) {
        return Err(Error::Precondition("trial results do not line up with samples".into()));
    }
    let completed = trials.iter().map(|t| t.predictions.len()).min().unwrap_or(0);
    let mut per_trial: Vec<Vec<MetricValue>> = Vec::with_capacity(completed);
    for t in 0..completed {
        let preds: Vec<&BinaryMask> = trials.iter().map(|s| &s.predictions[t]).collect();
        let gts: Vec<&BinaryMask> = samples.iter().map(|s| &s.gt).collect();
        per_trial.push(score_set(&preds, &gts, metrics, cfg)?);
    }
    let mut stats = Vec::new();
    for &metric in metrics {
        let Some(ideal) = baseline.iter().find(|v| v.metric == metric).map(|v| v.value) else {
            return Err(Error::Precondition(format!("no ideal baseline for {metric}")));
        };
        let values: Vec<f64> = per_trial
            .iter()
            .filter_map(|vs| vs.iter().find(|v| v.metric == metric).map(|v| v.value))
            .collect();
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        stats.push(TrialStats {
            metric,
            polarity: metric.polarity(),
            ideal,
            mean,
            std: libm::sqrt(var),
            n_trials: values.len() as u32,
            delta: relative_change(mean, ideal),
        });
    }
    Ok(TrialReport {
        stats,
        events: trials.iter().flat_map(|t| t.events.iter().cloned()).collect(),
        completed_trials: completed as u32,
        failures: trials
            .iter()
            .filter_map(|t| t.failure.as_ref().map(|f| format!("{}: {f}", t.id)))
            .collect(),
    })
}

/// Per-metric value of a set of predictions: per-sample metrics averaged
/// over samples, dataset-level metrics computed over the whole set. Used for
/// both the ideal baseline and each trial.
pub fn score_set(preds: &[&BinaryMask], gts: &[&BinaryMask], metrics: &[MetricId], cfg: &EvalConfig) -> Result<Vec<MetricValue>> {
    let sample_metrics: Vec<MetricId> = metrics.iter().copied().filter(|m| !m.is_dataset_level()).collect();
    let mut sums: Vec<(MetricId, f64)> = sample_metrics.iter().map(|&m| (m, 0.0)).collect();
    for (p, g) in preds.iter().zip(gts) {
        for v in score_binary(p, g, &sample_metrics, cfg)? {
            if let Some(s) = sums.iter_mut().find(|s| s.0 == v.metric) {
                s.1 += v.value;
            }
        }
    }
    let n = preds.len() as f64;
    let mut out: Vec<MetricValue> = sums.into_iter().map(|(m, s)| MetricValue::new(m, s / n)).collect();
    let dataset_metrics: Vec<MetricId> = metrics.iter().copied().filter(|m| m.is_dataset_level()).collect();
    if !dataset_metrics.is_empty() {
        let maps: Vec<ScoreMap> = preds.iter().map(|p| ScoreMap::from_mask(p)).collect();
        let gts: Vec<BinaryMask> = gts.iter().map(|&g| g.clone()).collect();
        out.extend(score_dataset(&maps, &gts, &dataset_metrics, cfg)?);
    }
    Ok(out)
}

/// Sequential convenience: ideal runs are supplied, trials run sample by sample.
pub fn run_trials<S: Segmenter + ?Sized>(
    samples: &[Sample],
    ideal: &[IdealRun],
    mode: PromptMode,
    seg: &mut SegmenterHandle<S>,
    baseline: &[MetricValue],
    metrics: &[MetricId],
    cfg: &EvalConfig,
) -> Result<TrialReport> {
    if samples.len() != ideal.len() {
        return Err(Error::Precondition("one ideal run per sample required".into()));
    }
    let trials: Vec<SampleTrials> =
        samples.iter().zip(ideal).map(|(s, i)| sample_trials(s, i, mode, seg, cfg)).collect();
    summarize_trials(samples, &trials, baseline, metrics, cfg)
}

/// Renders a relative change as a signed percentage, e.g. `-2.50%`.
pub fn format_delta(delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{:+.2}%", d * 100.0),
        None => "n/a".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GtOracle, GtStore};

    #[test]
    fn degenerate_bounds_keep_point() {
        let mut rng = substream(1, 1, "a");
        for _ in 0..100 {
            let p = jitter_point(PointPrompt::foreground(0, 0), (1, 1), 10, &mut rng);
            assert_eq!((p.x, p.y), (0, 0));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..8).map(|_| substream(9, 2, "s").gen()).collect();
        let b: Vec<u64> = (0..8).map(|_| substream(9, 2, "s").gen()).collect();
        assert_eq!(a, b);
        let mut r1 = substream(9, 2, "s");
        let mut r2 = substream(9, 3, "s");
        let mut r3 = substream(9, 2, "t");
        let x: u64 = r1.gen();
        assert_ne!(x, r2.gen::<u64>());
        assert_ne!(x, r3.gen::<u64>());
    }

    #[test]
    fn short_box_sides_do_not_move() {
        let b = BoxPrompt::new(10, 10, 19, 40);
        assert_eq!(box_margin(&b, 10), 0);
        let mut rng = substream(3, 1, "b");
        for _ in 0..100 {
            assert_eq!(jitter_box(&b, (64, 64), 10, &mut rng).bbox, b);
        }
    }

    #[test]
    fn box_margin_is_floor_of_ten_percent() {
        assert_eq!(box_margin(&BoxPrompt::new(0, 0, 100, 40), 10), 4);
        assert_eq!(box_margin(&BoxPrompt::new(0, 0, 10, 10), 10), 1);
        assert_eq!(box_margin(&BoxPrompt::new(0, 0, 29, 100), 10), 2);
    }

    #[test]
    fn extent_restoration() {
        assert_eq!(restore_extent(3, 3, 10), (3, 4, true));
        assert_eq!(restore_extent(10, 10, 10), (9, 10, true));
        assert_eq!(restore_extent(2, 5, 10), (2, 5, false));
    }

    #[test]
    fn eroding_a_tiny_blob_falls_back() {
        let blob = BinaryMask::from_fn(7, 7, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        assert!(morph(&blob, MorphOp::Erode, 2).is_blank());
        // Find a seed whose draw is an erosion of at least 2 steps.
        let j = (0..200u32)
            .map(|t| morph_perturb_mask(&blob, 5, &mut substream(0, t, "blob")).unwrap())
            .find(|j| j.op == MorphOp::Erode && j.iterations >= 2)
            .unwrap();
        assert!(j.fallback);
        assert_eq!(j.mask, blob);
        assert!(morph_perturb_mask(&BinaryMask::new(3, 3), 5, &mut substream(0, 0, "")).is_err());
    }

    #[test]
    fn solid_square_always_changes() {
        let sq = BinaryMask::from_fn(60, 60, |x, y| (5..55).contains(&x) && (5..55).contains(&y));
        for t in 0..50 {
            let j = morph_perturb_mask(&sq, 5, &mut substream(4, t, "sq")).unwrap();
            assert!(!j.fallback);
            assert_ne!(j.mask, sq);
        }
    }

    #[test]
    fn relative_change_arithmetic() {
        let d = relative_change((0.78 + 0.78 + 0.78) / 3.0, 0.80).unwrap();
        assert!((d + 0.025).abs() < 1e-12);
        assert_eq!(format_delta(Some(d)), "-2.50%");
        assert_eq!(format_delta(Some(0.0123)), "+1.23%");
        assert_eq!(relative_change(0.5, 0.0), None);
    }

    #[test]
    fn zero_magnitude_trials_match_ideal() {
        let gt = BinaryMask::from_fn(40, 40, |x, y| (8..30).contains(&x) && (10..26).contains(&y));
        let mut store = GtStore::new();
        store.insert("img".into(), gt.clone());
        let mut seg = SegmenterHandle::connect(GtOracle::new(store)).unwrap();
        let cfg = EvalConfig { point_max_shift: 0, box_max_percent: 0, morph_max_iterations: 0, ..Default::default() };
        let sample = Sample { id: "s".into(), image: "img".into(), gt: gt.clone() };
        let metrics = [MetricId::Iou, MetricId::Dice, MetricId::Mae];
        for mode in [PromptMode::Point, PromptMode::Box, PromptMode::Mask] {
            let ideal = ideal_run(&sample, mode, &mut seg, &cfg).unwrap();
            let baseline = score_binary(&ideal.prediction, &gt, &metrics, &cfg).unwrap();
            let rep = run_trials(core::slice::from_ref(&sample), &[ideal], mode, &mut seg, &baseline, &metrics, &cfg).unwrap();
            assert_eq!(rep.completed_trials, 5);
            for s in &rep.stats {
                assert_eq!(s.mean, s.ideal, "{mode:?} {:?}", s.metric);
                assert_eq!(s.std, 0.0);
                assert!(s.delta.is_none_or(|d| d == 0.0));
            }
        }
    }
}
