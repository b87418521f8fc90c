//! Per-region overlap integrated over the low false-positive-rate range.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{check_dims, BinaryMask, ScoreMap};
use crate::raster::{connected_components, Connectivity};

use super::{MetricId, MetricValue};

/// Area under the PRO curve up to `fpr_cap`, divided by `fpr_cap`.
///
/// At a threshold `t` a pixel is anomalous iff its score is `>= t`. PRO is the
/// mean, over every ground-truth component of every image, of the fraction of
/// that component flagged; FPR is taken over all normal pixels of all images.
/// Thresholds run over every distinct score, and the curve is integrated as a
/// staircase starting at `(0, 0)`: at any FPR the best PRO reached so far
/// holds until the next operating point.
pub fn pro(
    maps: &[ScoreMap],
    gts: &[BinaryMask],
    fpr_cap: f64,
    connectivity: Connectivity,
) -> Result<MetricValue> {
    if maps.len() != gts.len() {
        return Err(Error::Precondition(alloc::format!("{} maps for {} masks", maps.len(), gts.len())));
    }
    if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
        return Err(Error::InvalidThreshold(fpr_cap));
    }

    // (score, component id or None for normal pixels)
    let mut pixels: Vec<(f64, Option<u32>)> = Vec::new();
    let mut areas: Vec<usize> = Vec::new();
    let mut n_normal = 0usize;
    for (map, gt) in maps.iter().zip(gts) {
        check_dims(gt.dims(), map.dims())?;
        let cs = connected_components(gt, connectivity);
        let offset = areas.len() as u32;
        areas.extend_from_slice(cs.areas());
        for (&s, &l) in map.scores().iter().zip(cs.label_map()) {
            if l == 0 {
                n_normal += 1;
                pixels.push((s, None));
            } else {
                pixels.push((s, Some(offset + l - 1)));
            }
        }
    }
    if areas.is_empty() {
        return Err(Error::UndefinedMetric { metric: "P-PRO", reason: "no anomalous pixels" });
    }
    if n_normal == 0 {
        return Err(Error::UndefinedMetric { metric: "P-PRO", reason: "no normal pixels" });
    }
    pixels.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_regions = areas.len() as f64;
    let mut overlap_sum = 0.0;
    let mut false_pos = 0usize;
    let (mut fpr, mut pro_val) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < pixels.len() && fpr < fpr_cap {
        let score = pixels[i].0;
        while i < pixels.len() && pixels[i].0 == score {
            match pixels[i].1 {
                None => false_pos += 1,
                Some(c) => overlap_sum += 1.0 / areas[c as usize] as f64,
            }
            i += 1;
        }
        let next_fpr = false_pos as f64 / n_normal as f64;
        area += pro_val * (next_fpr.min(fpr_cap) - fpr);
        fpr = next_fpr;
        pro_val = overlap_sum / n_regions;
    }
    if fpr < fpr_cap {
        area += pro_val * (fpr_cap - fpr);
    }
    Ok(MetricValue::new(MetricId::PixelPro, (area / fpr_cap).clamp(0.0, 1.0)))
}
