//! Scoring functions and report aggregation.
//!
//! Every metric returns a [`MetricValue`] in `[0, 1]`. Pixel metrics take a
//! soft [`ScoreMap`](crate::ScoreMap) or a binary mask; ranking metrics take
//! flat score/label lists and are used at both image and pixel level.

mod pro;
mod ranking;
mod region;
mod report;
mod structure;
mod weighted_f;

use core::fmt;
use core::str::FromStr;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::mask::{BinaryMask, ScoreMap};

pub use pro::pro;
pub use ranking::{auroc, average_precision, image_scores, pixel_auroc, pixel_average_precision};
pub use region::{ber, dice, iou, mae, Confusion};
pub use report::{aggregate, AggregationScheme, MetricReport, SampleMetrics};
pub use structure::s_measure;
pub use weighted_f::weighted_f_measure;

/// `np.spacing(1)`, the guard used by the reference toolkits.
pub(crate) const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "Sm")]
    SMeasure,
    #[serde(rename = "wFm")]
    WeightedF,
    #[serde(rename = "BER")]
    Ber,
    #[serde(rename = "IoU")]
    Iou,
    #[serde(rename = "Dice")]
    Dice,
    #[serde(rename = "I-AUROC")]
    ImageAuroc,
    #[serde(rename = "I-AP")]
    ImageAp,
    #[serde(rename = "P-AUROC")]
    PixelAuroc,
    #[serde(rename = "P-AP")]
    PixelAp,
    #[serde(rename = "P-PRO")]
    PixelPro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

impl Polarity {
    pub fn arrow(self) -> &'static str {
        match self {
            Polarity::HigherBetter => "↑",
            Polarity::LowerBetter => "↓",
        }
    }
}

impl MetricId {
    pub const ALL: [MetricId; 11] = [
        MetricId::Mae,
        MetricId::SMeasure,
        MetricId::WeightedF,
        MetricId::Ber,
        MetricId::Iou,
        MetricId::Dice,
        MetricId::ImageAuroc,
        MetricId::ImageAp,
        MetricId::PixelAuroc,
        MetricId::PixelAp,
        MetricId::PixelPro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Mae => "MAE",
            MetricId::SMeasure => "Sm",
            MetricId::WeightedF => "wFm",
            MetricId::Ber => "BER",
            MetricId::Iou => "IoU",
            MetricId::Dice => "Dice",
            MetricId::ImageAuroc => "I-AUROC",
            MetricId::ImageAp => "I-AP",
            MetricId::PixelAuroc => "P-AUROC",
            MetricId::PixelAp => "P-AP",
            MetricId::PixelPro => "P-PRO",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            MetricId::Mae | MetricId::Ber => Polarity::LowerBetter,
            _ => Polarity::HigherBetter,
        }
    }

    /// Metrics computed once per dataset rather than per sample.
    pub fn is_dataset_level(self) -> bool {
        matches!(
            self,
            MetricId::ImageAuroc | MetricId::ImageAp | MetricId::PixelAuroc | MetricId::PixelAp | MetricId::PixelPro
        )
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = &'static str;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or("unknown metric")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: MetricId,
    pub value: f64,
    pub polarity: Polarity,
    /// Set when the value comes from a degenerate-input rule rather than the
    /// metric's main definition (e.g. weighted F on an empty ground truth).
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub flagged: bool,
}

impl MetricValue {
    pub fn new(metric: MetricId, value: f64) -> Self {
        debug_assert!(value.is_finite(), "{metric} produced {value}");
        Self { metric, value, polarity: metric.polarity(), flagged: false }
    }

    pub fn flagged(metric: MetricId, value: f64) -> Self {
        Self { flagged: true, ..Self::new(metric, value) }
    }
}

/// Per-sample metrics of a soft prediction. Region metrics (BER, IoU, Dice)
/// use the prediction binarized at `cfg.binarize_threshold`. Dataset-level
/// ids in `metrics` are ignored.
pub fn score_sample(
    pred: &ScoreMap,
    gt: &BinaryMask,
    metrics: &[MetricId],
    cfg: &EvalConfig,
) -> crate::Result<Vec<MetricValue>> {
    let mut binary = None;
    let mut confusion = || -> crate::Result<Confusion> {
        if binary.is_none() {
            binary = Some(Confusion::of(&pred.binarize(cfg.binarize_threshold)?, gt)?);
        }
        Ok(binary.expect("set above"))
    };
    let mut out = Vec::with_capacity(metrics.len());
    for &m in metrics {
        out.push(match m {
            MetricId::Mae => mae(pred, gt)?,
            MetricId::SMeasure => s_measure(pred, gt, cfg.s_measure_alpha)?,
            MetricId::WeightedF => weighted_f_measure(pred, gt, cfg.wfm_beta2, cfg.wfm_sigma)?,
            MetricId::Ber => MetricValue::new(m, confusion()?.ber()),
            MetricId::Iou => MetricValue::new(m, confusion()?.iou()),
            MetricId::Dice => MetricValue::new(m, confusion()?.dice()),
            _ => continue,
        });
    }
    Ok(out)
}

/// [`score_sample`] for a binary prediction.
pub fn score_binary(
    pred: &BinaryMask,
    gt: &BinaryMask,
    metrics: &[MetricId],
    cfg: &EvalConfig,
) -> crate::Result<Vec<MetricValue>> {
    score_sample(&ScoreMap::from_mask(pred), gt, metrics, cfg)
}

/// Dataset-level metrics over a set of score maps. An image counts as
/// anomalous when its ground truth has any foreground; its image score is the
/// map maximum. Per-sample ids in `metrics` are ignored.
pub fn score_dataset(
    maps: &[ScoreMap],
    gts: &[BinaryMask],
    metrics: &[MetricId],
    cfg: &EvalConfig,
) -> crate::Result<Vec<MetricValue>> {
    let labels: Vec<bool> = gts.iter().map(|g| !g.is_blank()).collect();
    let mut out = Vec::new();
    for &m in metrics {
        out.push(match m {
            MetricId::ImageAuroc => MetricValue::new(m, auroc(&image_scores(maps), &labels)?),
            MetricId::ImageAp => MetricValue::new(m, average_precision(&image_scores(maps), &labels)?),
            MetricId::PixelAuroc => pixel_auroc(maps, gts)?,
            MetricId::PixelAp => pixel_average_precision(maps, gts)?,
            MetricId::PixelPro => pro(maps, gts, cfg.pro_fpr_cap, cfg.connectivity)?,
            _ => continue,
        });
    }
    Ok(out)
}
