use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{MetricId, MetricValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub values: Vec<MetricValue>,
}

/// Per-sample scores for one dataset (or a merge of several), with the
/// per-metric mean over samples and any dataset-level metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: Option<String>,
    pub per_sample: Vec<SampleMetrics>,
    pub aggregates: Vec<MetricValue>,
    #[serde(default)]
    pub dataset_level: Vec<MetricValue>,
}

impl MetricReport {
    /// Builds a report; `aggregates` are arithmetic means over the samples
    /// that carry each metric, in [`MetricId`] order.
    pub fn from_samples(dataset: Option<String>, per_sample: Vec<SampleMetrics>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for s in &per_sample {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Precondition(format!("duplicate sample id {:?}", s.id)));
            }
        }
        let aggregates = means(&per_sample);
        Ok(Self { dataset, per_sample, aggregates, dataset_level: Vec::new() })
    }

    pub fn with_dataset_level(mut self, values: Vec<MetricValue>) -> Self {
        self.dataset_level = values;
        self
    }

    pub fn aggregate(&self, metric: MetricId) -> Option<f64> {
        self.aggregates
            .iter()
            .chain(&self.dataset_level)
            .find(|v| v.metric == metric)
            .map(|v| v.value)
    }

    pub fn metric_set(&self) -> BTreeSet<MetricId> {
        self.aggregates.iter().chain(&self.dataset_level).map(|v| v.metric).collect()
    }
}

fn means(samples: &[SampleMetrics]) -> Vec<MetricValue> {
    let mut acc: BTreeMap<MetricId, (f64, usize)> = BTreeMap::new();
    for s in samples {
        for v in &s.values {
            let e = acc.entry(v.metric).or_insert((0.0, 0));
            e.0 += v.value;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(m, (sum, n))| MetricValue::new(m, sum / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationScheme {
    /// Pool every sample of every input; each image weighs the same.
    PerDatasetMean,
    /// Average each dataset's means with equal weight per dataset.
    CrossDatasetMean,
}

/// Merges reports. Reports sharing a dataset name are first pooled into one
/// dataset. Sample ids are prefixed with `dataset/` when more than one
/// dataset is involved.
pub fn aggregate(reports: &[MetricReport], scheme: AggregationScheme) -> Result<MetricReport> {
    let first = reports.first().ok_or(Error::InsufficientSamples { needed: 1, available: 0 })?;
    let metric_set = first.metric_set();
    if let Some(r) = reports.iter().find(|r| r.metric_set() != metric_set) {
        return Err(Error::Precondition(format!(
            "report for {:?} carries a different metric set",
            r.dataset
        )));
    }
    if reports.len() == 1 {
        return Ok(first.clone());
    }

    let mut by_dataset: BTreeMap<Option<&str>, Vec<&MetricReport>> = BTreeMap::new();
    for r in reports {
        by_dataset.entry(r.dataset.as_deref()).or_default().push(r);
    }
    let multi = by_dataset.len() > 1;
    let datasets: Vec<MetricReport> = by_dataset
        .into_iter()
        .map(|(name, group)| pool(name, &group, multi))
        .collect::<Result<_>>()?;
    if datasets.len() == 1 {
        return Ok(datasets.into_iter().next().expect("one dataset"));
    }

    let per_sample: Vec<SampleMetrics> = datasets.iter().flat_map(|d| d.per_sample.iter().cloned()).collect();
    match scheme {
        AggregationScheme::PerDatasetMean => {
            let mut out = MetricReport::from_samples(None, per_sample)?;
            out.dataset_level = mean_of(datasets.iter().map(|d| &d.dataset_level));
            Ok(out)
        }
        AggregationScheme::CrossDatasetMean => {
            let mut ids = BTreeSet::new();
            for s in &per_sample {
                if !ids.insert(s.id.as_str()) {
                    return Err(Error::Precondition(format!("duplicate sample id {:?}", s.id)));
                }
            }
            Ok(MetricReport {
                dataset: None,
                aggregates: mean_of(datasets.iter().map(|d| &d.aggregates)),
                dataset_level: mean_of(datasets.iter().map(|d| &d.dataset_level)),
                per_sample,
            })
        }
    }
}

fn pool(name: Option<&str>, group: &[&MetricReport], prefix: bool) -> Result<MetricReport> {
    let per_sample = group
        .iter()
        .flat_map(|r| r.per_sample.iter())
        .map(|s| SampleMetrics {
            id: match (prefix, name) {
                (true, Some(n)) => format!("{n}/{}", s.id),
                _ => s.id.clone(),
            },
            values: s.values.clone(),
        })
        .collect();
    let mut out = MetricReport::from_samples(name.map(String::from), per_sample)?;
    out.dataset_level = mean_of(group.iter().map(|r| &r.dataset_level));
    Ok(out)
}

fn mean_of<'a>(lists: impl Iterator<Item = &'a Vec<MetricValue>>) -> Vec<MetricValue> {
    let mut acc: BTreeMap<MetricId, (f64, usize)> = BTreeMap::new();
    for list in lists {
        for v in list {
            let e = acc.entry(v.metric).or_insert((0.0, 0));
            e.0 += v.value;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(m, (sum, n))| MetricValue::new(m, sum / n as f64)).collect()
}
