//! Report files. Every writer is deterministic: rows follow sample and
//! metric order, floats use the shortest round-trip form, and JSON keys come
//! out in declaration order.
//!
//! CSV schemas (the header line is fixed per report type):
//!
//! | file            | header                                                          |
//! |-----------------|-----------------------------------------------------------------|
//! | per-sample      | [`PER_SAMPLE_HEADER`]                                           |
//! | aggregate       | [`AGGREGATE_HEADER`]                                            |
//! | trials          | [`TRIAL_HEADER`]                                                |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use segeval_core::metrics::{MetricId, MetricReport, MetricValue, SampleMetrics};
use segeval_core::perturb::{format_delta, TrialReport, TrialStats};

pub const PER_SAMPLE_HEADER: [&str; 5] = ["dataset", "sample", "metric", "value", "flagged"];
/// `scope` is `mean` for per-sample means and `dataset` for dataset-level
/// metrics.
pub const AGGREGATE_HEADER: [&str; 6] = ["dataset", "metric", "scope", "value", "polarity", "samples"];
/// `delta` is the signed relative change in percent; `direction` is ↑ or ↓
/// for the sign of the change (= when unchanged); `degraded` tells whether
/// that direction is bad for the metric.
pub const TRIAL_HEADER: [&str; 10] =
    ["metric", "polarity", "ideal", "mean", "std", "n_trials", "delta", "direction", "degraded", "partial"];

/// Name used for a report without a dataset (a cross-dataset merge).
pub const COMBINED: &str = "ALL";

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn dataset_name(r: &MetricReport) -> &str {
    r.dataset.as_deref().unwrap_or(COMBINED)
}

pub fn per_sample_csv(reports: &[MetricReport]) -> Result<Vec<u8>> {
    if reports.iter().all(|r| r.per_sample.is_empty()) {
        bail!("report has no samples");
    }
    let rows = reports.iter().flat_map(|r| {
        r.per_sample.iter().flat_map(move |s| {
            s.values.iter().map(move |v| {
                vec![
                    dataset_name(r).to_string(),
                    s.id.clone(),
                    v.metric.name().to_string(),
                    v.value.to_string(),
                    v.flagged.to_string(),
                ]
            })
        })
    });
    csv_bytes(&PER_SAMPLE_HEADER, rows)
}

pub fn aggregate_csv(reports: &[MetricReport]) -> Result<Vec<u8>> {
    if reports.is_empty() {
        bail!("no reports");
    }
    let rows = reports.iter().flat_map(|r| {
        let n = r.per_sample.len().to_string();
        let row = move |v: &MetricValue, scope: &str| {
            vec![
                dataset_name(r).to_string(),
                v.metric.name().to_string(),
                scope.to_string(),
                v.value.to_string(),
                v.polarity.arrow().to_string(),
                n.clone(),
            ]
        };
        let mut out: Vec<Vec<String>> = r.aggregates.iter().map(|v| row(v, "mean")).collect();
        out.extend(r.dataset_level.iter().map(|v| row(v, "dataset")));
        out
    });
    csv_bytes(&AGGREGATE_HEADER, rows)
}

fn direction(s: &TrialStats) -> &'static str {
    match s.delta {
        Some(d) if d > 0.0 => "↑",
        Some(d) if d < 0.0 => "↓",
        Some(_) => "=",
        None => "",
    }
}

pub fn trial_csv(report: &TrialReport) -> Result<Vec<u8>> {
    if report.stats.is_empty() {
        bail!("trial report is empty");
    }
    let rows = report.stats.iter().map(|s| {
        vec![
            s.metric.name().to_string(),
            s.polarity.arrow().to_string(),
            s.ideal.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.n_trials.to_string(),
            format_delta(s.delta),
            direction(s).to_string(),
            s.degraded().to_string(),
            report.partial().to_string(),
        ]
    });
    csv_bytes(&TRIAL_HEADER, rows)
}

/// JSON form of a trial report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReportFile {
    pub completed_trials: u32,
    pub partial: bool,
    pub stats: Vec<TrialStats>,
    pub events: Vec<segeval_core::perturb::PerturbEvent>,
    pub failures: Vec<String>,
}

impl From<&TrialReport> for TrialReportFile {
    fn from(r: &TrialReport) -> Self {
        Self {
            completed_trials: r.completed_trials,
            partial: r.partial(),
            stats: r.stats.clone(),
            events: r.events.clone(),
            failures: r.failures.clone(),
        }
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes metric reports as per-sample and aggregate CSVs or one JSON list.
pub fn write_metric_reports(reports: &[MetricReport], dir: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            write_bytes(&dir.join("per_sample.csv"), &per_sample_csv(reports)?)?;
            write_bytes(&dir.join("aggregate.csv"), &aggregate_csv(reports)?)
        }
        Format::Json => {
            if reports.is_empty() {
                bail!("no reports");
            }
            write_bytes(&dir.join("report.json"), &json_bytes(&reports)?)
        }
    }
}

pub fn write_trial_report(report: &TrialReport, dir: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_bytes(&dir.join("trials.csv"), &trial_csv(report)?),
        Format::Json => write_bytes(&dir.join("trials.json"), &json_bytes(&TrialReportFile::from(report))?),
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_bytes(path, &json_bytes(value)?)
}

/// Reads reports back from a per-sample CSV or a `report.json`. CSV input
/// carries no dataset-level metrics.
pub fn read_reports(path: &Path) -> Result<Vec<MetricReport>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()));
    }
    let mut r = csv::Reader::from_reader(&bytes[..]);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != PER_SAMPLE_HEADER {
        bail!("{}: expected header {}, got {}", path.display(), PER_SAMPLE_HEADER.join(","), header.join(","));
    }
    let mut by_dataset: BTreeMap<String, Vec<SampleMetrics>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let (ds, id, metric, value, flagged) = (&rec[0], &rec[1], &rec[2], &rec[3], &rec[4]);
        let metric: MetricId = metric.parse().map_err(|e| anyhow::anyhow!("{}: {e} {metric:?}", path.display()))?;
        let value: f64 = value.parse().with_context(|| format!("{}: value {value:?}", path.display()))?;
        let v = if flagged == "true" { MetricValue::flagged(metric, value) } else { MetricValue::new(metric, value) };
        if !by_dataset.contains_key(ds) {
            order.push(ds.to_string());
        }
        let samples = by_dataset.entry(ds.to_string()).or_default();
        match samples.last_mut() {
            Some(s) if s.id == id => s.values.push(v),
            _ => samples.push(SampleMetrics { id: id.to_string(), values: vec![v] }),
        }
    }
    order
        .into_iter()
        .map(|ds| {
            let samples = by_dataset.remove(&ds).expect("recorded");
            let name = (ds != COMBINED).then_some(ds);
            Ok(MetricReport::from_samples(name, samples)?)
        })
        .collect()
}
