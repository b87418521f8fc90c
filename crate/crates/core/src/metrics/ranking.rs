//! Ranking metrics: ROC area and average precision, at image or pixel level.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{check_dims, BinaryMask, ScoreMap};

use super::{MetricId, MetricValue};

fn sorted_desc(scores: &[f64], labels: &[bool], metric: &'static str) -> Result<Vec<(f64, bool)>> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: (labels.len(), 1), found: (scores.len(), 1) });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric { metric, reason: "non-finite score" });
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

/// Area under the ROC curve. Tied scores count half, matching the midrank
/// (Mann-Whitney) form.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pairs = sorted_desc(scores, labels, "AUROC")?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric { metric: "AUROC", reason: "needs both positive and negative labels" });
    }
    // Walk tie groups from the top; each negative in a group beats nothing
    // below it and ties with the group's positives.
    let mut wins = 0.0;
    let mut pos_above = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        wins += gn as f64 * (pos_above as f64 + 0.5 * gp as f64);
        pos_above += gp;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Average precision: `sum_k (R_k - R_{k-1}) * P_k` over distinct score
/// thresholds, highest first.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pairs = sorted_desc(scores, labels, "AP")?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric { metric: "AP", reason: "needs at least one positive label" });
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let score = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == score {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Image-level anomaly score of each map: its maximum pixel score.
pub fn image_scores(maps: &[ScoreMap]) -> Vec<f64> {
    maps.iter().map(ScoreMap::max).collect()
}

fn flatten(maps: &[ScoreMap], gts: &[BinaryMask]) -> Result<(Vec<f64>, Vec<bool>)> {
    if maps.len() != gts.len() {
        return Err(Error::Precondition(alloc::format!("{} maps for {} masks", maps.len(), gts.len())));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (m, g) in maps.iter().zip(gts) {
        check_dims(g.dims(), m.dims())?;
        scores.extend_from_slice(m.scores());
        labels.extend_from_slice(g.bits());
    }
    Ok((scores, labels))
}

pub fn pixel_auroc(maps: &[ScoreMap], gts: &[BinaryMask]) -> Result<MetricValue> {
    let (s, l) = flatten(maps, gts)?;
    Ok(MetricValue::new(MetricId::PixelAuroc, auroc(&s, &l)?))
}

pub fn pixel_average_precision(maps: &[ScoreMap], gts: &[BinaryMask]) -> Result<MetricValue> {
    let (s, l) = flatten(maps, gts)?;
    Ok(MetricValue::new(MetricId::PixelAp, average_precision(&s, &l)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_ranking() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [true, true, false, false];
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
        assert_eq!(average_precision(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_give_half() {
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn interleaved_example() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let l = [true, false, true, false];
        assert_eq!(auroc(&s, &l).unwrap(), 0.75);
        // P@1 = 1 at R=0.5; P@3 = 2/3 at R=1.
        let ap = average_precision(&s, &l).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(auroc(&[0.1, 0.2], &[false, false]), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(average_precision(&[0.1], &[false]), Err(Error::UndefinedMetric { .. })));
        assert!(average_precision(&[0.1], &[true]).is_ok());
    }

    #[test]
    fn image_score_is_map_maximum() {
        let m = ScoreMap::from_scores(2, 2, vec![0.1, 0.7, 0.3, 0.2]).unwrap();
        assert_eq!(image_scores(&[m]), vec![0.7]);
    }
}
