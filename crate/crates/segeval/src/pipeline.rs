//! Dataset-level runs: one worker per sample or sequence, results in
//! dataset order no matter which worker finished first.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use segeval_core::metrics::{score_binary, MetricId, MetricReport, MetricValue, SampleMetrics};
use segeval_core::perturb::{self, IdealRun, PromptMode, Sample, TrialReport};
use segeval_core::prompt::ContextExemplar;
use segeval_core::prompt_sim::{box_prompt_run, everything_run, icl_run, mask_prompt_run, simulate_clicks};
use segeval_core::segmenter::Capability;
use segeval_core::temporal::{bidirectional_3d, run_video, SequenceManifest, SequenceRun, VideoStrategy};
use segeval_core::{BinaryMask, EvalConfig, SequenceRecord};

use crate::dataset::{save_mask, DatasetKind, LoadedDataset};
use crate::segmenters::HandlePool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImageMode {
    Point,
    Box,
    Mask,
    /// Everything mode followed by overlap filtering against the ground truth.
    Everything,
    /// In-context: exemplars from the training split, no prompt on the target.
    Icl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Image { mode: ImageMode },
    Video { strategy: VideoStrategy },
    Volume { k: usize, mode: PromptMode },
}

impl Task {
    pub fn dataset_kind(&self) -> DatasetKind {
        match self {
            Task::Image { .. } => DatasetKind::Image,
            Task::Video { .. } => DatasetKind::Video,
            Task::Volume { .. } => DatasetKind::Volume,
        }
    }

    /// Capabilities the segmenter must declare before any sample is sent.
    pub fn required_capabilities(&self) -> Vec<Capability> {
        let prompt_cap = |m: PromptMode| match m {
            PromptMode::Point => Capability::Points,
            PromptMode::Box => Capability::Boxes,
            PromptMode::Mask => Capability::Mask,
        };
        match *self {
            Task::Image { mode: ImageMode::Point } => vec![Capability::Points],
            Task::Image { mode: ImageMode::Box } => vec![Capability::Boxes],
            Task::Image { mode: ImageMode::Mask } => vec![Capability::Mask],
            Task::Image { mode: ImageMode::Everything } => vec![Capability::Everything],
            Task::Image { mode: ImageMode::Icl } => vec![Capability::ContextMemory],
            Task::Video { strategy } => match strategy {
                VideoStrategy::PerFrameGt { mode: segeval_core::temporal::PropagationMode::Point }
                | VideoStrategy::PropagatedPoint => vec![Capability::Points],
                VideoStrategy::PerFrameGt { mode: segeval_core::temporal::PropagationMode::Box }
                | VideoStrategy::PropagatedBox => vec![Capability::Boxes],
                VideoStrategy::Multiframe { mode, .. } => vec![Capability::ContextMemory, prompt_cap(mode)],
            },
            Task::Volume { mode, .. } => vec![Capability::ContextMemory, prompt_cap(mode)],
        }
    }

    pub fn check_capabilities(&self, pool: &HandlePool) -> Result<()> {
        let missing: Vec<String> = self
            .required_capabilities()
            .into_iter()
            .filter(|c| !pool.info().supports(*c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            bail!("segmenter {:?} lacks capabilities required by this run: {}", pool.info().name, missing.join(", "));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub sample: String,
    pub message: String,
}

pub struct RunOptions<'a> {
    pub cfg: &'a EvalConfig,
    pub metrics: &'a [MetricId],
    /// Where to write predicted masks as PNG, if anywhere.
    pub predictions_dir: Option<&'a Path>,
}

impl RunOptions<'_> {
    fn sample_metrics(&self) -> Vec<MetricId> {
        self.metrics.iter().copied().filter(|m| !m.is_dataset_level()).collect()
    }

    fn dataset_metrics(&self) -> Vec<MetricId> {
        self.metrics.iter().copied().filter(|m| m.is_dataset_level()).collect()
    }

    fn save(&self, dataset: &str, id: &str, mask: &BinaryMask) -> Result<()> {
        if let Some(dir) = self.predictions_dir {
            save_mask(mask, &dir.join(dataset).join(format!("{id}.png")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub report: MetricReport,
    pub failures: Vec<Failure>,
    /// Video and volume runs: one index per sequence.
    pub sequences: Vec<(String, SequenceManifest)>,
}

struct Scored {
    metrics: SampleMetrics,
    pred: BinaryMask,
    gt: BinaryMask,
}

fn score(id: &str, pred: BinaryMask, gt: &BinaryMask, flag: bool, opts: &RunOptions) -> Result<Scored> {
    let mut values = score_binary(&pred, gt, &opts.sample_metrics(), opts.cfg)?;
    if flag {
        values.iter_mut().for_each(|v| v.flagged = true);
    }
    Ok(Scored { metrics: SampleMetrics { id: id.to_string(), values }, pred, gt: gt.clone() })
}

fn assemble(name: &str, scored: Vec<Scored>, failures: Vec<Failure>, opts: &RunOptions) -> Result<DatasetOutcome> {
    let dataset_metrics = opts.dataset_metrics();
    let dataset_level = if dataset_metrics.is_empty() || scored.is_empty() {
        Vec::new()
    } else {
        let preds: Vec<&BinaryMask> = scored.iter().map(|s| &s.pred).collect();
        let gts: Vec<&BinaryMask> = scored.iter().map(|s| &s.gt).collect();
        perturb::score_set(&preds, &gts, &dataset_metrics, opts.cfg)?
    };
    let per_sample = scored.into_iter().map(|s| s.metrics).collect();
    let report = MetricReport::from_samples(Some(name.to_string()), per_sample)?.with_dataset_level(dataset_level);
    Ok(DatasetOutcome { report, failures, sequences: Vec::new() })
}

/// Scores every image of an image dataset under one prompt mode. Samples
/// whose ground truth is empty cannot be prompted by point, box or mask;
/// they get an empty prediction with every value flagged.
pub fn eval_images(
    ds: &LoadedDataset,
    mode: ImageMode,
    pool: &HandlePool,
    opts: &RunOptions,
    icl: Option<&[ContextExemplar]>,
) -> Result<DatasetOutcome> {
    if ds.manifest.kind != DatasetKind::Image {
        bail!("{} is a {:?} dataset, image prompt modes need an image dataset", ds.manifest.name, ds.manifest.kind);
    }
    if mode == ImageMode::Icl && icl.is_none_or(|c| c.is_empty()) {
        bail!("in-context mode needs exemplars from a training split");
    }
    let cfg = opts.cfg;
    let results: Vec<Result<Scored, Failure>> = ds
        .manifest
        .samples
        .par_iter()
        .zip(ds.masks.par_iter())
        .map(|(entry, gt)| {
            let image = entry.image_ref();
            let promptless = matches!(mode, ImageMode::Point | ImageMode::Box | ImageMode::Mask) && gt.is_blank();
            let pred = if promptless {
                Ok(BinaryMask::new(gt.width(), gt.height()))
            } else {
                pool.with(|h| match mode {
                    ImageMode::Point => simulate_clicks(gt, &image, h, cfg).map(|r| r.0),
                    ImageMode::Box => box_prompt_run(gt, &image, h, cfg.connectivity),
                    ImageMode::Mask => mask_prompt_run(gt, &image, h),
                    ImageMode::Everything => everything_run(gt, &image, h, cfg.ofs_threshold),
                    ImageMode::Icl => icl_run(&image, gt.dims(), icl.unwrap_or_default(), h),
                })
            };
            let fail = |e: &dyn std::fmt::Display| Failure { sample: entry.id.clone(), message: e.to_string() };
            let pred = pred.map_err(|e| fail(&e))?;
            opts.save(&ds.manifest.name, &entry.id, &pred).map_err(|e| fail(&e))?;
            score(&entry.id, pred, gt, promptless, opts).map_err(|e| fail(&e))
        })
        .collect();
    let (scored, failures) = split(results);
    assemble(&ds.manifest.name, scored, failures, opts)
}

fn split<T>(results: Vec<Result<T, Failure>>) -> (Vec<T>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(f) => bad.push(f),
        }
    }
    (ok, bad)
}

/// Runs every sequence of a video or volume dataset and scores each frame.
/// A sequence cut short by a segmenter failure keeps the frames it finished.
pub fn eval_sequences(ds: &LoadedDataset, task: Task, pool: &HandlePool, opts: &RunOptions) -> Result<DatasetOutcome> {
    if ds.manifest.kind != task.dataset_kind() {
        bail!("{} is a {:?} dataset, this run needs {:?}", ds.manifest.name, ds.manifest.kind, task.dataset_kind());
    }
    let run = |seq: &SequenceRecord, h: &mut crate::segmenters::Handle| -> segeval_core::Result<SequenceRun> {
        match task {
            Task::Video { strategy } => run_video(seq, strategy, h, opts.cfg),
            Task::Volume { k, mode } => bidirectional_3d(seq, k, mode, h, opts.cfg),
            Task::Image { .. } => unreachable!("checked above"),
        }
    };
    type SeqResult = (Vec<Result<Scored, Failure>>, Option<(String, SequenceManifest)>);
    let per_seq: Vec<SeqResult> = ds
        .sequences
        .par_iter()
        .zip(ds.manifest.sequences.par_iter())
        .map(|((id, seq), entry)| {
            let outcome = pool.with(|h| run(seq, h));
            let out = match outcome {
                Err(e) => return (vec![Err(Failure { sample: id.clone(), message: e.to_string() })], None),
                Ok(o) => o,
            };
            let done = out.manifest.completed_frames.unwrap_or(seq.len());
            let preds = out.record.predictions().expect("runs attach predictions");
            let mut frames: Vec<Result<Scored, Failure>> = Vec::with_capacity(seq.len());
            for (i, (f, e)) in seq.frames().iter().zip(&entry.frames).enumerate().take(done) {
                let flag = out.manifest.skipped_prompts.contains(&i);
                let r = opts
                    .save(&ds.manifest.name, &e.id, &preds[i])
                    .and_then(|_| score(&e.id, preds[i].clone(), &f.gt, flag, opts));
                frames.push(r.map_err(|err| Failure { sample: e.id.clone(), message: err.to_string() }));
            }
            if let Some(msg) = &out.manifest.failure {
                frames.push(Err(Failure { sample: id.clone(), message: format!("stopped after {done} frames: {msg}") }));
            }
            (frames, Some((id.clone(), out.manifest)))
        })
        .collect();
    let mut results = Vec::new();
    let mut manifests = Vec::new();
    for (frames, m) in per_seq {
        results.extend(frames);
        manifests.extend(m);
    }
    let (scored, failures) = split(results);
    let mut out = assemble(&ds.manifest.name, scored, failures, opts)?;
    out.sequences = manifests;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PerturbOutcome {
    /// Scores under the ideal prompts, the baseline for every Δ.
    pub ideal: MetricReport,
    pub trials: TrialReport,
    pub failures: Vec<Failure>,
    /// Samples left out because their ground truth is empty.
    pub skipped: Vec<String>,
}

/// Ideal run, then `cfg.n_trials` perturbed runs per sample.
pub fn perturb_images(ds: &LoadedDataset, mode: PromptMode, pool: &HandlePool, opts: &RunOptions) -> Result<PerturbOutcome> {
    if ds.manifest.kind != DatasetKind::Image {
        bail!("perturbation trials run on image datasets");
    }
    let cfg = opts.cfg;
    let mut skipped = Vec::new();
    let mut samples = Vec::new();
    for (entry, gt) in ds.manifest.samples.iter().zip(&ds.masks) {
        if gt.is_blank() {
            skipped.push(entry.id.clone());
        } else {
            samples.push(Sample { id: entry.id.clone(), image: entry.image_ref(), gt: gt.clone() });
        }
    }
    if samples.is_empty() {
        bail!("no sample with a nonempty ground truth");
    }

    let ideal: Vec<Result<(Sample, IdealRun), Failure>> = samples
        .into_par_iter()
        .map(|s| {
            pool.with(|h| perturb::ideal_run(&s, mode, h, cfg))
                .map(|run| (s.clone(), run))
                .map_err(|e| Failure { sample: s.id.clone(), message: e.to_string() })
        })
        .collect();
    let (ideal, mut failures) = split(ideal);
    if ideal.is_empty() {
        bail!("every ideal run failed");
    }
    let (samples, runs): (Vec<Sample>, Vec<IdealRun>) = ideal.into_iter().unzip();

    let preds: Vec<&BinaryMask> = runs.iter().map(|r| &r.prediction).collect();
    let gts: Vec<&BinaryMask> = samples.iter().map(|s| &s.gt).collect();
    let baseline: Vec<MetricValue> = perturb::score_set(&preds, &gts, opts.metrics, cfg)?;
    let per_sample = samples
        .iter()
        .zip(&runs)
        .map(|(s, r)| {
            Ok(SampleMetrics { id: s.id.clone(), values: score_binary(&r.prediction, &s.gt, &opts.sample_metrics(), cfg)? })
        })
        .collect::<segeval_core::Result<Vec<_>>>()?;
    let ideal_report = MetricReport::from_samples(Some(ds.manifest.name.clone()), per_sample)?
        .with_dataset_level(baseline.iter().copied().filter(|v| v.metric.is_dataset_level()).collect());

    let trials: Vec<perturb::SampleTrials> = samples
        .par_iter()
        .zip(runs.par_iter())
        .map(|(s, r)| pool.with(|h| perturb::sample_trials(s, r, mode, h, cfg)))
        .collect();
    failures.extend(
        trials
            .iter()
            .filter_map(|t| t.failure.as_ref().map(|m| Failure { sample: t.id.clone(), message: m.clone() })),
    );
    let trials = perturb::summarize_trials(&samples, &trials, &baseline, opts.metrics, cfg)?;
    Ok(PerturbOutcome { ideal: ideal_report, trials, failures, skipped })
}

/// Where a sequence index file goes inside an output directory.
pub fn sequence_index_path(out: &Path, dataset: &str, seq: &str) -> PathBuf {
    out.join("sequences").join(dataset).join(format!("{seq}.json"))
}
