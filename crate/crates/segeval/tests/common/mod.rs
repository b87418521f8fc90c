#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segeval_core::{BinaryMask, ScoreMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn disk(w: usize, h: usize, cx: i64, cy: i64, r: i64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as i64 - cx, y as i64 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// A few overlapping disks and rectangles.
pub fn blobs(w: usize, h: usize, rng: &mut impl Rng) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for _ in 0..rng.gen_range(1..4) {
        let part = if rng.gen_bool(0.5) {
            disk(w, h, rng.gen_range(0..w as i64), rng.gen_range(0..h as i64), rng.gen_range(2..w as i64 / 4))
        } else {
            let (x0, y0) = (rng.gen_range(0..w - 2), rng.gen_range(0..h - 2));
            let (x1, y1) = (rng.gen_range(x0 + 1..w), rng.gen_range(y0 + 1..h));
            BinaryMask::from_fn(w, h, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
        };
        m = m.or(&part).unwrap();
    }
    m
}

/// Soft prediction near `gt`, with scores quantized to `levels` steps so
/// that ties occur.
pub fn noisy_scores(gt: &BinaryMask, levels: u32, rng: &mut impl Rng) -> ScoreMap {
    let bias: f64 = rng.gen_range(0.2..0.8);
    let scores = gt
        .bits()
        .iter()
        .map(|&g| {
            let base = if g { bias } else { 1.0 - bias };
            let s: f64 = (base + rng.gen_range(-0.5..0.5)).clamp(0.0, 1.0);
            (s * levels as f64).round() / levels as f64
        })
        .collect();
    ScoreMap::from_scores(gt.width(), gt.height(), scores).unwrap()
}

pub fn write_gray(path: &Path, w: usize, h: usize, value: impl Fn(usize, usize) -> u8) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([value(x as usize, y as usize)])).save(path).unwrap();
}

pub fn write_pair(root: &Path, rel: &str, gt: &BinaryMask) {
    let (w, h) = gt.dims();
    write_gray(&root.join("images").join(format!("{rel}.png")), w, h, |x, y| ((x * 7 + y * 3) % 256) as u8);
    write_gray(&root.join("masks").join(format!("{rel}.png")), w, h, |x, y| if gt.get(x, y) { 255 } else { 0 });
}

/// Image dataset of `n` blob masks; every fifth sample has an empty mask.
pub fn image_dataset(root: &Path, n: usize, seed: u64) -> Vec<BinaryMask> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let gt = if i % 5 == 4 { BinaryMask::new(32, 24) } else { blobs(32, 24, &mut r) };
            write_pair(root, &format!("{i:03}"), &gt);
            gt
        })
        .collect()
}

/// Single-blob image dataset without empty masks.
pub fn disk_dataset(root: &Path, n: usize, seed: u64) -> Vec<BinaryMask> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let gt = disk(40, 40, r.gen_range(14..26), r.gen_range(14..26), r.gen_range(5..12));
            write_pair(root, &format!("{i}"), &gt);
            gt
        })
        .collect()
}

/// Sequences of a moving disk, one directory per sequence.
pub fn sequence_dataset(root: &Path, seqs: usize, frames: usize, seed: u64) {
    let mut r = rng(seed);
    for s in 0..seqs {
        let (mut cx, cy) = (r.gen_range(8..14), r.gen_range(8..16));
        for f in 0..frames {
            let rad = r.gen_range(3..6);
            let gt = disk(32, 24, cx, cy, rad);
            write_pair(root, &format!("seq{s}/{f}"), &gt);
            cx += 1;
        }
    }
}

/// Direct-from-definition metric implementations, written independently of
/// the library for cross-checking.
pub mod brute {
    use segeval_core::{BinaryMask, ScoreMap};

    const EPS: f64 = f64::EPSILON;

    pub fn mae(p: &ScoreMap, g: &BinaryMask) -> f64 {
        let mut s = 0.0;
        for y in 0..g.height() {
            for x in 0..g.width() {
                let t = if g.get(x, y) { 1.0 } else { 0.0 };
                s += (p.get(x, y) - t).abs();
            }
        }
        s / (g.width() * g.height()) as f64
    }

    fn counts(p: &BinaryMask, g: &BinaryMask) -> (f64, f64, f64, f64) {
        let (mut tp, mut fp, mut fne, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for y in 0..g.height() {
            for x in 0..g.width() {
                match (p.get(x, y), g.get(x, y)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fne += 1.0,
                    (false, false) => tn += 1.0,
                }
            }
        }
        (tp, fp, fne, tn)
    }

    pub fn iou(p: &BinaryMask, g: &BinaryMask) -> f64 {
        let (tp, fp, fne, _) = counts(p, g);
        if tp + fp + fne == 0.0 {
            1.0
        } else {
            tp / (tp + fp + fne)
        }
    }

    pub fn dice(p: &BinaryMask, g: &BinaryMask) -> f64 {
        let (tp, fp, fne, _) = counts(p, g);
        if tp + fp + fne == 0.0 {
            1.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fne)
        }
    }

    pub fn ber(p: &BinaryMask, g: &BinaryMask) -> f64 {
        let (tp, fp, fne, tn) = counts(p, g);
        let fpr = if fp + tn == 0.0 { 0.0 } else { fp / (fp + tn) };
        let fnr = if fne + tp == 0.0 { 0.0 } else { fne / (fne + tp) };
        0.5 * (fpr + fnr)
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn sample_var(v: &[f64], m: f64) -> f64 {
        if v.len() < 2 {
            0.0
        } else {
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64
        }
    }

    fn s_object(v: &[f64]) -> f64 {
        let m = mean(v);
        let sd = sample_var(v, m).sqrt();
        2.0 * m / (m * m + 1.0 + sd + EPS)
    }

    fn block_ssim(p: &[f64], g: &[f64]) -> f64 {
        let (x, y) = (mean(p), mean(g));
        let n = p.len();
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        if n > 1 {
            for i in 0..n {
                sx += (p[i] - x) * (p[i] - x);
                sy += (g[i] - y) * (g[i] - y);
                sxy += (p[i] - x) * (g[i] - y);
            }
            let d = (n - 1) as f64;
            sx /= d;
            sy /= d;
            sxy /= d;
        }
        let a = 4.0 * x * y * sxy;
        let b = (x * x + y * y) * (sx + sy);
        if a != 0.0 {
            a / (b + EPS)
        } else if b == 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn s_measure(p: &ScoreMap, g: &BinaryMask, alpha: f64) -> f64 {
        let (w, h) = g.dims();
        let n = (w * h) as f64;
        let fg_frac = g.count() as f64 / n;
        let pm = p.scores().iter().sum::<f64>() / n;
        if g.count() == 0 {
            return 1.0 - pm;
        }
        if g.count() == w * h {
            return pm;
        }
        let fg: Vec<f64> = (0..w * h).filter(|&i| g.bits()[i]).map(|i| p.scores()[i]).collect();
        let bg: Vec<f64> = (0..w * h).filter(|&i| !g.bits()[i]).map(|i| 1.0 - p.scores()[i]).collect();
        let object = fg_frac * s_object(&fg) + (1.0 - fg_frac) * s_object(&bg);

        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y) in g.foreground() {
            sx += x as f64;
            sy += y as f64;
        }
        let cnt = g.count() as f64;
        let cx = (sx / cnt).round_ties_even() as usize + 1;
        let cy = (sy / cnt).round_ties_even() as usize + 1;
        let block = |x0: usize, x1: usize, y0: usize, y1: usize| {
            let mut pv = Vec::new();
            let mut gv = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    pv.push(p.get(x, y));
                    gv.push(if g.get(x, y) { 1.0 } else { 0.0 });
                }
            }
            (pv, gv)
        };
        let parts = [
            (block(0, cx, 0, cy), (cx * cy) as f64 / n),
            (block(cx, w, 0, cy), (cy * (w - cx)) as f64 / n),
            (block(0, cx, cy, h), ((h - cy) * cx) as f64 / n),
        ];
        let w4 = 1.0 - parts.iter().map(|p| p.1).sum::<f64>();
        let mut region = 0.0;
        for ((pv, gv), wt) in parts.into_iter().chain([(block(cx, w, cy, h), w4)]) {
            if !pv.is_empty() {
                region += wt * block_ssim(&pv, &gv);
            }
        }
        (alpha * object + (1.0 - alpha) * region).max(0.0)
    }

    pub fn weighted_f(p: &ScoreMap, g: &BinaryMask, beta2: f64, sigma: f64) -> f64 {
        let (w, h) = g.dims();
        let fg: Vec<(usize, usize)> = g.foreground().collect();
        let e = |x: usize, y: usize| {
            let t = if g.get(x, y) { 1.0 } else { 0.0 };
            (p.get(x, y) - t).abs()
        };
        // nearest foreground pixel by exhaustive search, first in row-major order on ties
        let mut et = vec![0.0; w * h];
        let mut dist = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                if g.get(x, y) {
                    et[y * w + x] = e(x, y);
                    continue;
                }
                let mut best = (i64::MAX, (0, 0));
                for &(fx, fy) in &fg {
                    let d = (fx as i64 - x as i64).pow(2) + (fy as i64 - y as i64).pow(2);
                    if d < best.0 {
                        best = (d, (fx, fy));
                    }
                }
                et[y * w + x] = e(best.1 .0, best.1 .1);
                dist[y * w + x] = (best.0 as f64).sqrt();
            }
        }
        let mut k = [[0.0f64; 7]; 7];
        let mut kmax = 0.0f64;
        for (j, row) in k.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let (dx, dy) = (i as f64 - 3.0, j as f64 - 3.0);
                *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                kmax = kmax.max(*v);
            }
        }
        let mut ksum = 0.0;
        for v in k.iter_mut().flatten() {
            if *v < EPS * kmax {
                *v = 0.0;
            }
            ksum += *v;
        }
        let mut ea = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for j in -3..=3i64 {
                    for i in -3..=3i64 {
                        let (sx, sy) = (x + i, y + j);
                        if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                            acc += k[(j + 3) as usize][(i + 3) as usize] / ksum * et[sy as usize * w + sx as usize];
                        }
                    }
                }
                ea[y as usize * w + x as usize] = acc;
            }
        }
        let (mut ew_fg, mut ew_bg, mut nfg) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if g.get(x, y) {
                    ew_fg += ea[i].min(e(x, y));
                    nfg += 1.0;
                } else {
                    let b = 2.0 - ((0.5f64).ln() / 5.0 * dist[i]).exp();
                    ew_bg += e(x, y) * b;
                }
            }
        }
        let tpw = nfg - ew_fg;
        let r = 1.0 - ew_fg / nfg;
        let pr = tpw / (tpw + ew_bg + EPS);
        (1.0 + beta2) * r * pr / (r + beta2 * pr + EPS)
    }

    /// Pairwise Mann-Whitney count, ties worth one half.
    pub fn auroc(s: &[f64], l: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..s.len() {
            if !l[i] {
                continue;
            }
            for j in 0..s.len() {
                if l[j] {
                    continue;
                }
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn distinct_desc(s: &[f64]) -> Vec<f64> {
        let mut t = s.to_vec();
        t.sort_by(|a, b| b.partial_cmp(a).unwrap());
        t.dedup();
        t
    }

    /// Step-wise AP over every distinct threshold (score >= t is positive).
    pub fn average_precision(s: &[f64], l: &[bool]) -> f64 {
        let npos = l.iter().filter(|&&v| v).count() as f64;
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for t in distinct_desc(s) {
            let tp = s.iter().zip(l).filter(|(&v, &y)| v >= t && y).count() as f64;
            let fp = s.iter().zip(l).filter(|(&v, &y)| v >= t && !y).count() as f64;
            let r = tp / npos;
            ap += (r - prev_r) * tp / (tp + fp);
            prev_r = r;
        }
        ap
    }

    /// 8-connected labels by breadth-first flood fill; 0 is background.
    pub fn label(g: &BinaryMask) -> (Vec<usize>, usize) {
        let (w, h) = g.dims();
        let mut lab = vec![0usize; w * h];
        let mut n = 0;
        for start in 0..w * h {
            if !g.bits()[start] || lab[start] != 0 {
                continue;
            }
            n += 1;
            lab[start] = n;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if g.bits()[j] && lab[j] == 0 {
                            lab[j] = n;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        (lab, n)
    }

    /// PRO curve from (0, 0) through one point per distinct threshold,
    /// integrated as a left step function up to `cap`, divided by `cap`.
    pub fn pro(maps: &[ScoreMap], gts: &[BinaryMask], cap: f64) -> f64 {
        let labelled: Vec<(Vec<usize>, usize)> = gts.iter().map(label).collect();
        let regions: usize = labelled.iter().map(|l| l.1).sum();
        let normal: usize = gts.iter().map(|g| g.len() - g.count()).sum();
        let all: Vec<f64> = maps.iter().flat_map(|m| m.scores().iter().copied()).collect();
        let mut curve = vec![(0.0, 0.0)];
        for t in distinct_desc(&all) {
            let mut fp = 0usize;
            let mut overlap = 0.0;
            for (m, (lab, n)) in maps.iter().zip(&labelled) {
                let mut hit = vec![0usize; n + 1];
                let mut area = vec![0usize; n + 1];
                for (i, &s) in m.scores().iter().enumerate() {
                    area[lab[i]] += 1;
                    if s >= t {
                        hit[lab[i]] += 1;
                        if lab[i] == 0 {
                            fp += 1;
                        }
                    }
                }
                for c in 1..=*n {
                    overlap += hit[c] as f64 / area[c] as f64;
                }
            }
            curve.push((fp as f64 / normal as f64, overlap / regions as f64));
        }
        let mut area = 0.0;
        for i in 0..curve.len() {
            let (f0, p0) = curve[i];
            let f1 = if i + 1 < curve.len() { curve[i + 1].0 } else { cap };
            let (a, b) = (f0.min(cap), f1.min(cap));
            if b > a {
                area += p0 * (b - a);
            }
        }
        area / cap
    }
}
