//! Weighted F-measure with distance-based dependency and importance weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::mask::{check_dims, BinaryMask, ScoreMap};
use crate::raster::squared_edt;

use super::{MetricId, MetricValue, EPS};

const WINDOW: usize = 7;

/// Weighted F-measure. `beta2` is β², `sigma` the spread of the 7×7 Gaussian
/// dependency window. An empty ground truth scores 0 and is flagged.
///
/// Background errors are first replaced by the error at the nearest
/// foreground pixel (ties resolved toward the lowest row-major index), then
/// smoothed; background pixels are up-weighted by `2 - 0.5^(d / 5)` where
/// `d` is their distance to the foreground.
pub fn weighted_f_measure(pred: &ScoreMap, gt: &BinaryMask, beta2: f64, sigma: f64) -> Result<MetricValue> {
    check_dims(gt.dims(), pred.dims())?;
    if gt.is_blank() {
        return Ok(MetricValue::flagged(MetricId::WeightedF, 0.0));
    }
    let (w, h) = gt.dims();
    let g = gt.bits();
    let p = pred.scores();
    let err: Vec<f64> = p.iter().zip(g).map(|(&p, &g)| if g { 1.0 - p } else { p }).collect();

    let dist2 = squared_edt(g, w, h);
    let mut spread = err.clone();
    for i in 0..w * h {
        if !g[i] {
            spread[i] = err[nearest_foreground(gt, i % w, i / w, dist2[i])];
        }
    }

    let kernel = gaussian_kernel(sigma);
    let smoothed = convolve_zero_padded(&spread, w, h, &kernel);

    let decay = libm::log(0.5) / 5.0;
    let (mut fg_err, mut bg_err, mut n_fg) = (0.0, 0.0, 0usize);
    for i in 0..w * h {
        if g[i] {
            let e = if smoothed[i] < err[i] { smoothed[i] } else { err[i] };
            fg_err += e;
            n_fg += 1;
        } else {
            let importance = 2.0 - libm::exp(decay * libm::sqrt(dist2[i]));
            bg_err += err[i] * importance;
        }
    }
    let tp = n_fg as f64 - fg_err;
    let recall = 1.0 - fg_err / n_fg as f64;
    let precision = tp / (tp + bg_err + EPS);
    let q = (1.0 + beta2) * recall * precision / (recall + beta2 * precision + EPS);
    Ok(MetricValue::new(MetricId::WeightedF, q))
}

/// Row-major index of the nearest foreground pixel to `(x, y)` at squared
/// distance `d2`, choosing the lowest index among equidistant pixels.
fn nearest_foreground(gt: &BinaryMask, x: usize, y: usize, d2: f64) -> usize {
    let (w, h) = gt.dims();
    let d2 = d2 as i64;
    let r = isqrt(d2);
    for dy in -r..=r {
        let rem = d2 - dy * dy;
        let dx = isqrt(rem);
        if dx * dx != rem {
            continue;
        }
        let ny = y as i64 + dy;
        if ny < 0 || ny >= h as i64 {
            continue;
        }
        for nx in [x as i64 - dx, x as i64 + dx] {
            if nx >= 0 && nx < w as i64 && gt.get(nx as usize, ny as usize) {
                return ny as usize * w + nx as usize;
            }
        }
    }
    unreachable!("distance transform reported a foreground pixel at squared distance {d2}")
}

fn isqrt(n: i64) -> i64 {
    let mut r = libm::sqrt(n as f64) as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Normalized 7×7 Gaussian, with entries below `eps * max` zeroed first.
fn gaussian_kernel(sigma: f64) -> [[f64; WINDOW]; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut k = [[0.0; WINDOW]; WINDOW];
    let mut max: f64 = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - half, j as f64 - half);
            *v = libm::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            max = max.max(*v);
        }
    }
    let mut sum = 0.0;
    for v in k.iter_mut().flatten() {
        if *v < f64::EPSILON * max {
            *v = 0.0;
        }
        sum += *v;
    }
    if sum != 0.0 {
        k.iter_mut().flatten().for_each(|v| *v /= sum);
    }
    k
}

fn convolve_zero_padded(src: &[f64], w: usize, h: usize, k: &[[f64; WINDOW]; WINDOW]) -> Vec<f64> {
    let half = WINDOW / 2;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, row) in k.iter().enumerate() {
                let sy = y + j;
                if sy < half || sy - half >= h {
                    continue;
                }
                let base = (sy - half) * w;
                for (i, &kv) in row.iter().enumerate() {
                    let sx = x + i;
                    if sx < half || sx - half >= w {
                        continue;
                    }
                    acc += kv * src[base + sx - half];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}
