//! Structure measure: a blend of object-aware and region-aware similarity.

use crate::error::Result;
use crate::mask::{check_dims, BinaryMask, ScoreMap};

use super::{MetricId, MetricValue, EPS};

/// `alpha * object + (1 - alpha) * region`, clipped at 0.
///
/// An all-background ground truth scores `1 - mean(pred)`; an all-foreground
/// one scores `mean(pred)`.
pub fn s_measure(pred: &ScoreMap, gt: &BinaryMask, alpha: f64) -> Result<MetricValue> {
    check_dims(gt.dims(), pred.dims())?;
    let fg = gt.count();
    let value = if fg == 0 {
        1.0 - pred.mean()
    } else if fg == gt.len() {
        pred.mean()
    } else {
        let s = alpha * object_score(pred, gt) + (1.0 - alpha) * region_score(pred, gt);
        s.max(0.0)
    };
    Ok(MetricValue::new(MetricId::SMeasure, value))
}

fn object_score(pred: &ScoreMap, gt: &BinaryMask) -> f64 {
    let gt_mean = gt.foreground_fraction();
    let fg = pred.scores().iter().zip(gt.bits()).filter(|(_, &g)| g).map(|(&p, _)| p);
    let bg = pred.scores().iter().zip(gt.bits()).filter(|(_, &g)| !g).map(|(&p, _)| 1.0 - p);
    object_similarity(fg) * gt_mean + object_similarity(bg) * (1.0 - gt_mean)
}

fn object_similarity(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    // Sample standard deviation; a single pixel has none.
    let std = if n > 1 {
        let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

#[derive(Default, Clone, Copy)]
struct Block {
    n: usize,
    sum_x: f64,
    sum_y: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn region_score(pred: &ScoreMap, gt: &BinaryMask) -> f64 {
    let (w, h) = gt.dims();
    let (cx, cy) = split_point(gt);
    let quadrant = |x: usize, y: usize| (y >= cy) as usize * 2 + (x >= cx) as usize;

    // Row-major accumulation visits each quadrant's pixels in that quadrant's
    // own row-major order, so sums match a per-block computation exactly.
    let mut blocks = [Block::default(); 4];
    for y in 0..h {
        for x in 0..w {
            let b = &mut blocks[quadrant(x, y)];
            b.n += 1;
            b.sum_x += pred.get(x, y);
            b.sum_y += gt.get(x, y) as u8 as f64;
        }
    }
    let means: [(f64, f64); 4] = core::array::from_fn(|q| {
        let b = &blocks[q];
        (b.sum_x / b.n as f64, b.sum_y / b.n as f64)
    });
    for y in 0..h {
        for x in 0..w {
            let q = quadrant(x, y);
            let (mx, my) = means[q];
            let dx = pred.get(x, y) - mx;
            let dy = gt.get(x, y) as u8 as f64 - my;
            let b = &mut blocks[q];
            b.sxx += dx * dx;
            b.syy += dy * dy;
            b.sxy += dx * dy;
        }
    }

    let area = (w * h) as f64;
    let w_lt = (cx * cy) as f64 / area;
    let w_rt = (cy * (w - cx)) as f64 / area;
    let w_lb = ((h - cy) * cx) as f64 / area;
    let w_rb = 1.0 - w_lt - w_rt - w_lb;
    let weights = [w_lt, w_rt, w_lb, w_rb];

    (0..4)
        .filter(|&q| blocks[q].n > 0)
        .map(|q| ssim(&blocks[q], means[q]) * weights[q])
        .sum()
}

fn ssim(b: &Block, (x, y): (f64, f64)) -> f64 {
    let (sx, sy, sxy) = if b.n > 1 {
        let d = (b.n - 1) as f64;
        (b.sxx / d, b.syy / d, b.sxy / d)
    } else {
        (0.0, 0.0, 0.0)
    };
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Column/row where the four region blocks meet: the foreground centroid,
/// rounded half-to-even, plus one (blocks are `[0, c)` and `[c, len)`).
pub(crate) fn split_point(gt: &BinaryMask) -> (usize, usize) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in gt.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    let cx = libm::rint(sx / n as f64) as usize + 1;
    let cy = libm::rint(sy / n as f64) as usize + 1;
    (cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_match_scores_one() {
        let gt = BinaryMask::from_fn(16, 12, |x, y| (3..9).contains(&x) && (2..7).contains(&y));
        let v = s_measure(&ScoreMap::from_mask(&gt), &gt, 0.5).unwrap().value;
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn degenerate_ground_truth() {
        let empty = BinaryMask::new(4, 4);
        assert_eq!(s_measure(&ScoreMap::zeros(4, 4), &empty, 0.5).unwrap().value, 1.0);
        let pred = ScoreMap::from_scores(2, 1, vec![0.2, 0.6]).unwrap();
        let v = s_measure(&pred, &BinaryMask::new(2, 1), 0.5).unwrap().value;
        assert!((v - 0.6).abs() < 1e-15);
        let v = s_measure(&pred, &BinaryMask::full(2, 1), 0.5).unwrap().value;
        assert!((v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn split_rounds_half_to_even() {
        // Foreground columns 0 and 1: centroid 0.5 rounds to 0, split at 1.
        let gt = BinaryMask::from_ascii(&["##..", "...."]).unwrap();
        assert_eq!(split_point(&gt), (1, 1));
        // Columns 1 and 2: centroid 1.5 rounds to 2, split at 3.
        let gt = BinaryMask::from_ascii(&[".##.", "...."]).unwrap();
        assert_eq!(split_point(&gt), (3, 1));
    }

    #[test]
    fn foreground_on_last_column_leaves_empty_blocks() {
        let gt = BinaryMask::from_ascii(&["...#", "...#", "...."]).unwrap();
        let v = s_measure(&ScoreMap::from_mask(&gt), &gt, 0.5).unwrap().value;
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }
}
