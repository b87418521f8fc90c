//! The `segeval` command line.
//!
//! Exit status: 0 when every sample was scored, 2 when the run finished but
//! some samples or sequences failed (they are listed in `run.json`), 1 on
//! any error that stopped the run.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use segeval_core::metrics::{aggregate, AggregationScheme, MetricId, MetricReport};
use segeval_core::oracle::GtStore;
use segeval_core::perturb::PromptMode;
use segeval_core::prompt::ContextExemplar;
use segeval_core::prompt_sim::icl_context;
use segeval_core::raster::Connectivity;
use segeval_core::temporal::{PropagationMode, VideoStrategy};
use segeval_core::EvalConfig;

use crate::dataset::{DatasetKind, LoadedDataset, Split};
use crate::manifest::{DatasetSummary, RunManifest, SegmenterInfo};
use crate::pipeline::{self, DatasetOutcome, Failure, ImageMode, RunOptions, Task};
use crate::report::{self, Format};
use crate::segmenters::{HandlePool, OracleKind, SegmenterSpec};
use crate::transport::HttpServer;

#[derive(Debug, Parser)]
#[command(name = "segeval", version, about = "Evaluate promptable segmenters on binary segmentation datasets")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a segmenter over datasets and score every prediction.
    Eval(EvalArgs),
    /// Robustness trials: ideal prompts against perturbed ones.
    Perturb(PerturbArgs),
    /// Re-aggregate existing per-sample reports.
    Report(ReportArgs),
    /// Serve a bundled oracle over the segmenter protocol.
    ServeOracle(ServeArgs),
}

/// Evaluation knobs. Each flag overrides the same key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with evaluation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub click_limit: Option<u32>,
    #[arg(long)]
    pub iou_stop: Option<f64>,
    #[arg(long)]
    pub ofs_threshold: Option<f64>,
    #[arg(long)]
    pub binarize_threshold: Option<f64>,
    #[arg(long)]
    pub s_measure_alpha: Option<f64>,
    #[arg(long)]
    pub wfm_beta2: Option<f64>,
    #[arg(long)]
    pub wfm_sigma: Option<f64>,
    #[arg(long)]
    pub pro_fpr_cap: Option<f64>,
    #[arg(long)]
    pub n_trials: Option<u32>,
    #[arg(long, env = "SEGEVAL_SEED")]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub icl_count: Option<u32>,
    /// 4 or 8.
    #[arg(long, value_parser = clap::value_parser!(u8).range(4..=8))]
    pub connectivity: Option<u8>,
    #[arg(long)]
    pub point_max_shift: Option<u32>,
    #[arg(long)]
    pub box_max_percent: Option<u32>,
    #[arg(long)]
    pub morph_max_iterations: Option<u32>,
    #[arg(long, value_enum)]
    pub point_jitter_mode: Option<JitterModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JitterModeArg {
    RecordedClicks,
    FullLoop,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<EvalConfig> {
        let mut cfg = match &self.config {
            Some(p) => crate::config::load(p)?,
            None => EvalConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(
            click_limit,
            iou_stop,
            ofs_threshold,
            binarize_threshold,
            s_measure_alpha,
            wfm_beta2,
            wfm_sigma,
            pro_fpr_cap,
            n_trials,
            rng_seed,
            icl_count,
            point_max_shift,
            box_max_percent,
            morph_max_iterations
        );
        if let Some(c) = self.connectivity {
            cfg.connectivity = Connectivity::try_from(c).map_err(anyhow::Error::msg)?;
        }
        if let Some(m) = self.point_jitter_mode {
            cfg.point_jitter_mode = match m {
                JitterModeArg::RecordedClicks => segeval_core::config::PointJitterMode::RecordedClicks,
                JitterModeArg::FullLoop => segeval_core::config::PointJitterMode::FullLoop,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Both,
}

impl FormatArg {
    fn formats(self) -> &'static [Format] {
        match self {
            FormatArg::Csv => &[Format::Csv],
            FormatArg::Json => &[Format::Json],
            FormatArg::Both => &[Format::Csv, Format::Json],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    /// Every image weighs the same.
    PerDataset,
    /// Every dataset weighs the same.
    CrossDataset,
}

impl From<AggregateArg> for AggregationScheme {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::PerDataset => AggregationScheme::PerDatasetMean,
            AggregateArg::CrossDataset => AggregationScheme::CrossDatasetMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptModeArg {
    Point,
    Box,
    Mask,
}

impl From<PromptModeArg> for PromptMode {
    fn from(m: PromptModeArg) -> Self {
        match m {
            PromptModeArg::Point => PromptMode::Point,
            PromptModeArg::Box => PromptMode::Box,
            PromptModeArg::Mask => PromptMode::Mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    PerFramePoint,
    PerFrameBox,
    PropagatedPoint,
    PropagatedBox,
    /// Needs `--k` and `--frame-mode`.
    Multiframe,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Dataset root; repeat for several datasets.
    #[arg(long = "dataset", required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "image")]
    pub kind: DatasetKind,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// oracle:<name>, stdio:<command> or an http(s) URL.
    #[arg(long, env = "SEGEVAL_ENDPOINT")]
    pub segmenter: SegmenterSpec,
    /// Comma separated metric names.
    #[arg(long, value_delimiter = ',', default_value = "MAE,Sm,wFm,BER,IoU,Dice", value_parser = parse_metric)]
    pub metrics: Vec<MetricId>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "120")]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub format: FormatArg,
    /// Also write every predicted mask as a PNG under `<out>/predictions`.
    #[arg(long)]
    pub save_predictions: bool,
}

fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.trim().parse().map_err(|_| {
        let names: Vec<&str> = MetricId::ALL.iter().map(|m| m.name()).collect();
        format!("unknown metric {s:?} (one of {})", names.join(", "))
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Prompt mode for image datasets.
    #[arg(long, value_enum)]
    pub mode: Option<ImageMode>,
    /// Prompting strategy for video datasets.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Prompted frames for multiframe video and volume runs.
    #[arg(long, default_value = "1")]
    pub k: usize,
    /// Prompt type on the prompted frames of multiframe and volume runs.
    #[arg(long, value_enum, default_value = "mask")]
    pub frame_mode: PromptModeArg,
    /// Training split root supplying in-context exemplars.
    #[arg(long)]
    pub train_root: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cross-dataset")]
    pub aggregate: AggregateArg,
}

impl EvalArgs {
    /// Picks the task and rejects flag and dataset combinations that do
    /// not fit together.
    pub fn task(&self) -> Result<Task> {
        let kind = self.run.kind;
        match kind {
            DatasetKind::Image => {
                if self.strategy.is_some() {
                    bail!("--strategy applies to video datasets, not image datasets");
                }
                let Some(mode) = self.mode else { bail!("image datasets need --mode") };
                if mode == ImageMode::Icl && self.train_root.is_none() {
                    bail!("--mode icl needs --train-root");
                }
                Ok(Task::Image { mode })
            }
            DatasetKind::Video => {
                if let Some(m) = self.mode {
                    bail!("--mode {m:?} is an image prompt mode; video datasets take --strategy");
                }
                let Some(s) = self.strategy else { bail!("video datasets need --strategy") };
                let strategy = match s {
                    StrategyArg::PerFramePoint => VideoStrategy::PerFrameGt { mode: PropagationMode::Point },
                    StrategyArg::PerFrameBox => VideoStrategy::PerFrameGt { mode: PropagationMode::Box },
                    StrategyArg::PropagatedPoint => VideoStrategy::PropagatedPoint,
                    StrategyArg::PropagatedBox => VideoStrategy::PropagatedBox,
                    StrategyArg::Multiframe => VideoStrategy::Multiframe { k: self.k, mode: self.frame_mode.into() },
                };
                Ok(Task::Video { strategy })
            }
            DatasetKind::Volume => {
                if let Some(m) = self.mode {
                    bail!("--mode {m:?} is an image prompt mode; volume datasets are prompted with --k and --frame-mode");
                }
                if self.strategy.is_some() {
                    bail!("--strategy applies to video datasets, not volume datasets");
                }
                if self.k == 0 {
                    bail!("--k must be at least 1");
                }
                Ok(Task::Volume { k: self.k, mode: self.frame_mode.into() })
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum)]
    pub mode: PromptModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// per_sample.csv or report.json files; repeat for several.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "cross-dataset")]
    pub aggregate: AggregateArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub oracle: OracleKind,
    /// Datasets whose ground truth the oracle answers from.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "image")]
    pub kind: DatasetKind,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Listen on this address instead of speaking over stdin/stdout.
    #[arg(long)]
    pub http: Option<String>,
}

/// What a finished command reports back to `main`.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub failures: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            2
        } else {
            0
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Eval(a) => eval(&a),
        Command::Perturb(a) => perturb(&a),
        Command::Report(a) => report_cmd(&a),
        Command::ServeOracle(a) => serve(&a),
    }
}

fn load_datasets(roots: &[PathBuf], kind: DatasetKind, split: Split) -> Result<Vec<LoadedDataset>> {
    let mut out: Vec<LoadedDataset> = Vec::with_capacity(roots.len());
    for root in roots {
        let ds = LoadedDataset::scan_and_load(root, kind, split).with_context(|| format!("dataset {}", root.display()))?;
        for w in ds.manifest.warnings() {
            warn!("{}: {w}", ds.manifest.name);
        }
        if out.iter().any(|d| d.manifest.name == ds.manifest.name) {
            bail!("two datasets are named {:?}; dataset names come from the root directory name", ds.manifest.name);
        }
        info!("{}: {} pairs", ds.manifest.name, ds.manifest.pair_count());
        out.push(ds);
    }
    Ok(out)
}

fn merged_store(datasets: &[LoadedDataset]) -> Arc<GtStore> {
    let mut store = GtStore::new();
    for d in datasets {
        for (k, v) in d.gt_store().into_iter() {
            store.insert(k, v);
        }
    }
    Arc::new(store)
}

struct Session {
    cfg: EvalConfig,
    datasets: Vec<LoadedDataset>,
    pool: HandlePool,
    threads: rayon::ThreadPool,
    workers: usize,
}

fn open_session(run: &RunArgs, cfg: &ConfigArgs, extra: &[LoadedDataset]) -> Result<Session> {
    let cfg = cfg.resolve()?;
    if run.metrics.is_empty() {
        bail!("no metrics selected");
    }
    let datasets = load_datasets(&run.datasets, run.kind, run.split)?;
    let mut all: Vec<LoadedDataset> = datasets.clone();
    all.extend(extra.iter().cloned());
    let store = merged_store(&all);
    let jobs = run.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = HandlePool::open(&run.segmenter, &store, cfg.rng_seed, Duration::from_secs(run.timeout_secs), jobs)
        .with_context(|| format!("connecting to {}", run.segmenter))?;
    let workers = pool.size();
    if workers < jobs {
        info!("segmenter allows {workers} sessions, running {workers} workers instead of {jobs}");
    }
    let threads = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(Session { cfg, datasets, pool, threads, workers })
}

/// Combined row over the datasets that have at least one scored sample.
fn combine(reports: &[MetricReport], scheme: AggregationScheme) -> Result<Option<MetricReport>> {
    let scored: Vec<MetricReport> = reports.iter().filter(|r| !r.per_sample.is_empty()).cloned().collect();
    for r in reports.iter().filter(|r| r.per_sample.is_empty()) {
        warn!("{}: no scored samples, left out of the combined row", r.dataset.as_deref().unwrap_or("?"));
    }
    if reports.len() < 2 || scored.is_empty() {
        return Ok(None);
    }
    Ok(Some(aggregate(&scored, scheme)?))
}

fn write_reports(reports: &[MetricReport], combined: Option<&MetricReport>, out: &Path, format: FormatArg) -> Result<()> {
    for f in format.formats() {
        match f {
            Format::Csv => {
                report::write_bytes(&out.join("per_sample.csv"), &report::per_sample_csv(reports)?)?;
                let mut all = reports.to_vec();
                all.extend(combined.cloned());
                report::write_bytes(&out.join("aggregate.csv"), &report::aggregate_csv(&all)?)?;
            }
            Format::Json => {
                report::write_metric_reports(reports, out, Format::Json)?;
                if let Some(c) = combined {
                    report::write_json(c, &out.join("combined.json"))?;
                }
            }
        }
    }
    Ok(())
}

fn finish_manifest(m: &mut RunManifest, metrics: &[MetricId], datasets: &[LoadedDataset], workers: usize, scored: usize, failures: Vec<Failure>) {
    m.metrics = metrics.to_vec();
    m.datasets = datasets.iter().map(|d| DatasetSummary::from(&d.manifest)).collect();
    m.workers = workers;
    m.scored = scored;
    m.failures = failures;
}

fn report_failures(failures: &[Failure]) {
    for f in failures {
        warn!("{}: {}", f.sample, f.message);
    }
    if !failures.is_empty() {
        warn!("{} sample(s) or sequence(s) failed", failures.len());
    }
}

fn eval(a: &EvalArgs) -> Result<Outcome> {
    let task = a.task()?;
    let train = match (&a.train_root, task) {
        (Some(root), Task::Image { mode: ImageMode::Icl }) => {
            Some(LoadedDataset::scan_and_load(root, DatasetKind::Image, Split::Train).with_context(|| format!("training split {}", root.display()))?)
        }
        _ => None,
    };
    let s = open_session(&a.run, &a.cfg, train.as_slice())?;
    task.check_capabilities(&s.pool)?;
    let context: Option<Vec<ContextExemplar>> = match &train {
        Some(t) => {
            let pairs: Vec<_> = t.manifest.samples.iter().map(|e| e.image_ref()).zip(t.masks.iter().cloned()).collect();
            Some(icl_context(&pairs, s.cfg.icl_count as usize)?)
        }
        None => None,
    };

    let out = &a.run.out;
    let pred_dir = out.join("predictions");
    let opts = RunOptions {
        cfg: &s.cfg,
        metrics: &a.run.metrics,
        predictions_dir: a.run.save_predictions.then_some(pred_dir.as_path()),
    };
    let mut outcomes: Vec<DatasetOutcome> = Vec::new();
    for ds in &s.datasets {
        info!("{}: evaluating", ds.manifest.name);
        let o = s.threads.install(|| match task {
            Task::Image { mode } => pipeline::eval_images(ds, mode, &s.pool, &opts, context.as_deref()),
            _ => pipeline::eval_sequences(ds, task, &s.pool, &opts),
        })?;
        for (seq, m) in &o.sequences {
            report::write_json(m, &pipeline::sequence_index_path(out, &ds.manifest.name, seq))?;
        }
        outcomes.push(o);
    }

    let reports: Vec<MetricReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let combined = combine(&reports, a.aggregate.into())?;
    let failures: Vec<Failure> = outcomes.iter().flat_map(|o| o.failures.iter().cloned()).collect();
    let scored: usize = reports.iter().map(|r| r.per_sample.len()).sum();
    if scored == 0 {
        report_failures(&failures);
        bail!("no sample was scored");
    }
    write_reports(&reports, combined.as_ref(), out, a.run.format)?;

    let mut m = RunManifest::new("eval", &s.cfg, segmenter_info(&a.run, &s.pool), serde_json::to_value(task)?);
    finish_manifest(&mut m, &a.run.metrics, &s.datasets, s.workers, scored, failures.clone());
    report::write_json(&m, &out.join("run.json"))?;
    report_failures(&failures);
    Ok(Outcome { failures: failures.len() })
}

fn segmenter_info(run: &RunArgs, pool: &HandlePool) -> SegmenterInfo {
    SegmenterInfo { spec: run.segmenter.to_string(), handshake: pool.info().clone() }
}

fn perturb(a: &PerturbArgs) -> Result<Outcome> {
    if a.run.kind != DatasetKind::Image {
        bail!("perturbation trials run on image datasets");
    }
    if a.run.datasets.len() != 1 {
        bail!("perturb takes exactly one --dataset");
    }
    let s = open_session(&a.run, &a.cfg, &[])?;
    let mode: PromptMode = a.mode.into();
    Task::Image {
        mode: match mode {
            PromptMode::Point => ImageMode::Point,
            PromptMode::Box => ImageMode::Box,
            PromptMode::Mask => ImageMode::Mask,
        },
    }
    .check_capabilities(&s.pool)?;
    let ds = &s.datasets[0];
    let opts = RunOptions { cfg: &s.cfg, metrics: &a.run.metrics, predictions_dir: None };
    let o = s.threads.install(|| pipeline::perturb_images(ds, mode, &s.pool, &opts))?;
    for id in &o.skipped {
        warn!("{id}: empty ground truth, left out of the trials");
    }

    let out = &a.run.out;
    for f in a.run.format.formats() {
        report::write_trial_report(&o.trials, out, *f)?;
    }
    write_reports(std::slice::from_ref(&o.ideal), None, &out.join("ideal"), a.run.format)?;
    let task = serde_json::json!({ "task": "perturb", "mode": mode, "n_trials": s.cfg.n_trials });
    let mut m = RunManifest::new("perturb", &s.cfg, segmenter_info(&a.run, &s.pool), task);
    finish_manifest(&mut m, &a.run.metrics, &s.datasets, s.workers, o.ideal.per_sample.len(), o.failures.clone());
    report::write_json(&m, &out.join("run.json"))?;
    report_failures(&o.failures);
    Ok(Outcome { failures: o.failures.len() })
}

fn report_cmd(a: &ReportArgs) -> Result<Outcome> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        reports.extend(report::read_reports(p)?);
    }
    let reports: Vec<MetricReport> = reports.into_iter().filter(|r| r.dataset.is_some()).collect();
    if reports.is_empty() {
        bail!("no per-dataset reports in the inputs");
    }
    let combined = aggregate(&reports, a.aggregate.into())?;
    write_reports(&reports, Some(&combined), &a.out, a.format)?;
    Ok(Outcome::default())
}

fn serve(a: &ServeArgs) -> Result<Outcome> {
    let datasets = load_datasets(&a.datasets, a.kind, a.split)?;
    let seg = a.oracle.build(merged_store(&datasets), a.seed);
    match &a.http {
        Some(addr) => {
            let server = HttpServer::start(seg, addr)?;
            eprintln!("serving {} on http://{}", a.oracle.name(), server.addr());
            server.join();
        }
        None => {
            let mut seg = seg;
            let stdin = std::io::stdin();
            crate::protocol::serve_stdio(&mut *seg, stdin.lock(), std::io::stdout().lock())?;
        }
    }
    Ok(Outcome::default())
}
