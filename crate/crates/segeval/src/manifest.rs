//! The `run.json` written next to every report. It holds what is needed to
//! repeat a run and nothing time dependent, so two identical runs produce
//! identical bytes.

use serde::Serialize;
use segeval_core::metrics::MetricId;
use segeval_core::segmenter::Handshake;
use segeval_core::EvalConfig;

use crate::dataset::{DatasetKind, DatasetManifest, Split};
use crate::pipeline::Failure;
use segeval_core::segmenter::PROTOCOL_VERSION as PROTOCOL;

#[derive(Debug, Clone, Serialize)]
pub struct SegmenterInfo {
    pub spec: String,
    pub handshake: Handshake,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub root: String,
    pub kind: DatasetKind,
    pub split: Split,
    pub pairs: usize,
    pub sequences: usize,
    pub warnings: Vec<String>,
}

impl From<&DatasetManifest> for DatasetSummary {
    fn from(m: &DatasetManifest) -> Self {
        Self {
            name: m.name.clone(),
            root: m.root.to_string_lossy().into_owned(),
            kind: m.kind,
            split: m.split,
            pairs: m.pair_count(),
            sequences: m.sequences.len(),
            warnings: m.warnings(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub protocol: &'static str,
    pub config_hash: String,
    pub rng_seed: u64,
    pub config: EvalConfig,
    pub segmenter: SegmenterInfo,
    /// The run's task as given on the command line.
    pub task: serde_json::Value,
    pub metrics: Vec<MetricId>,
    pub datasets: Vec<DatasetSummary>,
    pub workers: usize,
    pub scored: usize,
    pub failures: Vec<Failure>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &EvalConfig, segmenter: SegmenterInfo, task: serde_json::Value) -> Self {
        Self {
            tool: concat!("segeval ", env!("CARGO_PKG_VERSION")).to_string(),
            command: command.to_string(),
            protocol: PROTOCOL,
            config_hash: crate::config::hash(cfg),
            rng_seed: cfg.rng_seed,
            config: cfg.clone(),
            segmenter,
            task,
            metrics: Vec::new(),
            datasets: Vec::new(),
            workers: 1,
            scored: 0,
            failures: Vec::new(),
        }
    }
}
