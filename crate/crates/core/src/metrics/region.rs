use crate::error::Result;
use crate::mask::{check_dims, BinaryMask, ScoreMap};

use super::{MetricId, MetricValue};

/// Mean absolute difference between a soft prediction and the lifted ground truth.
pub fn mae(pred: &ScoreMap, gt: &BinaryMask) -> Result<MetricValue> {
    check_dims(gt.dims(), pred.dims())?;
    let sum: f64 = pred
        .scores()
        .iter()
        .zip(gt.bits())
        .map(|(&p, &g)| if g { 1.0 - p } else { p })
        .sum();
    Ok(MetricValue::new(MetricId::Mae, sum / gt.len() as f64))
}

/// Pixel confusion counts of a binary prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn of(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        pred.ensure_same_dims(gt)?;
        let mut c = Confusion::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn ber(&self) -> f64 {
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        (rate(self.fp, self.fp + self.tn) + rate(self.fn_, self.fn_ + self.tp)) / 2.0
    }

    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    pub fn dice(&self) -> f64 {
        let total = 2 * self.tp + self.fp + self.fn_;
        if total == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / total as f64
        }
    }
}

/// Balanced error rate; a rate whose denominator is zero contributes 0.
pub fn ber(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    Ok(MetricValue::new(MetricId::Ber, Confusion::of(pred, gt)?.ber()))
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    Ok(MetricValue::new(MetricId::Iou, Confusion::of(pred, gt)?.iou()))
}

/// Dice coefficient; two empty masks score 1.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricValue> {
    Ok(MetricValue::new(MetricId::Dice, Confusion::of(pred, gt)?.dice()))
}
