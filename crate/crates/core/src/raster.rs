//! Pixel-grid primitives: connected components, Euclidean distance
//! transform, bounding boxes, cross-element morphology and overlap ratios.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::prompt::BoxPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = &'static str;

    fn try_from(v: u8) -> core::result::Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err("connectivity must be 4 or 8"),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Labelled connected components. Label 0 is background; components are
/// numbered `1..=count` in the order their first pixel appears in a
/// row-major scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSet {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    areas: Vec<usize>,
}

impl ComponentSet {
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    /// Pixel count of each component; `areas()[k - 1]` belongs to label `k`.
    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    pub fn label_map(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("label map matches dims")
    }

    pub fn masks(&self) -> Vec<BinaryMask> {
        (1..=self.count() as u32).map(|l| self.component_mask(l)).collect()
    }

    /// Tight half-open box per component, in label order.
    pub fn boxes(&self) -> Vec<BoxPrompt> {
        let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); self.count()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let (x, y) = (i % self.width, i / self.width);
            let b = &mut bounds[l as usize - 1];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x + 1);
            b.3 = b.3.max(y + 1);
        }
        bounds.into_iter().map(|(a, b, c, d)| BoxPrompt::new(a, b, c, d)).collect()
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentSet {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        areas.push(area);
    }
    ComponentSet { width: w, height: h, labels, areas }
}

/// A real-valued raster produced by the distance transform.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Location of the largest value; ties go to the first pixel in row-major
    /// order. `None` when every value is zero.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.map_or(0.0, |b| b.1) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| (i % self.width, i / self.width))
    }
}

// Stand-in for "no feature pixel in range"; exact in f64 when added to any
// squared distance of a realistic raster.
const FAR: f64 = 1e15;

/// Exact squared Euclidean distance from every pixel to the nearest `true`
/// pixel of `features` (a `w`×`h` row-major grid). Pixels with no feature
/// anywhere get a value `>= 1e15`.
pub fn squared_edt(features: &[bool], w: usize, h: usize) -> Vec<f64> {
    assert_eq!(features.len(), w * h);
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut grid: Vec<f64> = features.iter().map(|&b| if b { 0.0 } else { FAR }).collect();

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        lower_envelope(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        lower_envelope(&f[..w], &mut d[..w], &mut v, &mut z);
        row.copy_from_slice(&d[..w]);
    }
    grid
}

// One-dimensional squared distance transform by lower envelope of parabolas.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        // z[0] is -inf, so k never underflows.
        let s = loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s > z[k] {
                break s;
            }
            k -= 1;
        };
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *out = diff * diff + f[v[k]];
    }
}

/// Euclidean distance from each foreground pixel to the nearest background
/// pixel, where everything outside the image counts as background.
/// Background pixels hold 0.
pub fn distance_to_background(mask: &BinaryMask) -> DistanceMap {
    let (w, h) = mask.dims();
    let (pw, ph) = (w + 2, h + 2);
    let mut background = vec![true; pw * ph];
    for y in 0..h {
        for x in 0..w {
            background[(y + 1) * pw + x + 1] = !mask.get(x, y);
        }
    }
    let sq = squared_edt(&background, pw, ph);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(libm::sqrt(sq[(y + 1) * pw + x + 1]));
        }
    }
    DistanceMap { width: w, height: h, values }
}

/// Tightest half-open box around a set of pixel coordinates.
pub fn bounding_box(pixels: impl IntoIterator<Item = (usize, usize)>) -> Result<BoxPrompt> {
    let mut it = pixels.into_iter();
    let (x0, y0) = it.next().ok_or(Error::EmptyComponent)?;
    let (mut x_min, mut y_min, mut x_max, mut y_max) = (x0, y0, x0, y0);
    for (x, y) in it {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    Ok(BoxPrompt::new(x_min, y_min, x_max + 1, y_max + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Binary morphology with the 3×3 cross element, applied `iterations` times.
/// Pixels outside the image are background, so erosion eats in from the border.
pub fn morph(mask: &BinaryMask, op: MorphOp, iterations: u32) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut cur = mask.bits().to_vec();
    let mut next = vec![false; w * h];
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let up = y > 0 && cur[i - w];
                let down = y + 1 < h && cur[i + w];
                let left = x > 0 && cur[i - 1];
                let right = x + 1 < w && cur[i + 1];
                next[i] = match op {
                    MorphOp::Erode => cur[i] && up && down && left && right,
                    MorphOp::Dilate => cur[i] || up || down || left || right,
                };
            }
        }
        core::mem::swap(&mut cur, &mut next);
    }
    BinaryMask::from_bits(w, h, cur).expect("dims preserved")
}

/// `|entity ∩ gt| / |entity|`.
pub fn overlap_fraction(entity: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    entity.ensure_same_dims(gt)?;
    let area = entity.count();
    if area == 0 {
        return Err(Error::EmptyMask("overlap entity"));
    }
    Ok(entity.intersection_count(gt)? as f64 / area as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Flood fill over an explicit adjacency test, independent of the scan above.
    fn oracle_component_count(mask: &BinaryMask, conn: Connectivity) -> (usize, Vec<usize>) {
        let (w, h) = mask.dims();
        let adjacent = |a: (usize, usize), b: (usize, usize)| {
            let dx = a.0.abs_diff(b.0);
            let dy = a.1.abs_diff(b.1);
            match conn {
                Connectivity::Four => dx + dy == 1,
                Connectivity::Eight => dx.max(dy) == 1,
            }
        };
        let pixels: Vec<_> = mask.foreground().collect();
        let mut comp = vec![usize::MAX; pixels.len()];
        let mut areas = Vec::new();
        for s in 0..pixels.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = areas.len();
            comp[s] = id;
            let mut frontier = vec![s];
            let mut area = 0;
            while let Some(i) = frontier.pop() {
                area += 1;
                for j in 0..pixels.len() {
                    if comp[j] == usize::MAX && adjacent(pixels[i], pixels[j]) {
                        comp[j] = id;
                        frontier.push(j);
                    }
                }
            }
            areas.push(area);
        }
        let _ = (w, h);
        (areas.len(), areas)
    }

    fn oracle_distance(mask: &BinaryMask, x: usize, y: usize) -> f64 {
        if !mask.get(x, y) {
            return 0.0;
        }
        let (w, h) = mask.dims();
        let mut best = f64::INFINITY;
        for by in -1..=h as isize {
            for bx in -1..=w as isize {
                let outside = bx < 0 || by < 0 || bx >= w as isize || by >= h as isize;
                if outside || !mask.get(bx as usize, by as usize) {
                    let dx = bx as f64 - x as f64;
                    let dy = by as f64 - y as f64;
                    best = best.min((dx * dx + dy * dy).sqrt());
                }
            }
        }
        best
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cs = connected_components(&BinaryMask::new(5, 5), Connectivity::Eight);
        assert_eq!(cs.count(), 0);
    }

    #[test]
    fn two_squares() {
        let m = BinaryMask::from_fn(10, 5, |x, y| (1..4).contains(&y) && (x < 3 || (5..8).contains(&x)));
        let cs = connected_components(&m, Connectivity::Eight);
        assert_eq!(cs.count(), 2);
        assert_eq!(cs.areas(), &[9, 9]);
        assert_eq!(oracle_component_count(&m, Connectivity::Eight), (2, vec![9, 9]));
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let m = BinaryMask::from_ascii(&["#.", ".#"]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
        assert_eq!(oracle_component_count(&m, Connectivity::Eight).0, 1);
        assert_eq!(oracle_component_count(&m, Connectivity::Four).0, 2);
    }

    #[test]
    fn labels_follow_first_scan_order() {
        let m = BinaryMask::from_ascii(&["..#", "#..", "..#"]).unwrap();
        let cs = connected_components(&m, Connectivity::Four);
        assert_eq!(cs.label_at(2, 0), 1);
        assert_eq!(cs.label_at(0, 1), 2);
        assert_eq!(cs.label_at(2, 2), 3);
    }

    #[test]
    fn distance_examples() {
        assert!(distance_to_background(&BinaryMask::new(4, 4)).values().iter().all(|&v| v == 0.0));

        let mut single = BinaryMask::new(5, 5);
        single.set(2, 3, true);
        let d = distance_to_background(&single);
        assert_eq!(d.get(2, 3), 1.0);
        assert_eq!(oracle_distance(&single, 2, 3), 1.0);

        let square = BinaryMask::from_fn(9, 9, |x, y| (2..7).contains(&x) && (2..7).contains(&y));
        let d = distance_to_background(&square);
        assert_eq!(d.get(4, 4), 3.0);
        assert_eq!(oracle_distance(&square, 4, 4), 3.0);
        assert_eq!(d.argmax(), Some((4, 4)));
    }

    #[test]
    fn border_counts_as_background() {
        let d = distance_to_background(&BinaryMask::full(7, 3));
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(3, 1), 2.0);
    }

    #[test]
    fn bounding_box_examples() {
        assert_eq!(bounding_box([(3, 4)]).unwrap(), BoxPrompt::new(3, 4, 4, 5));
        let l_shape = (2..7).map(|y| (1, y)).chain((1..4).map(|x| (x, 6)));
        assert_eq!(bounding_box(l_shape).unwrap(), BoxPrompt::new(1, 2, 4, 7));
        let full = BinaryMask::full(6, 4);
        assert_eq!(bounding_box(full.foreground()).unwrap(), BoxPrompt::new(0, 0, 6, 4));
        assert_eq!(bounding_box(core::iter::empty()), Err(Error::EmptyComponent));
    }

    #[test]
    fn morph_examples() {
        let m = BinaryMask::from_ascii(&["#.#", ".##"]).unwrap();
        assert_eq!(morph(&m, MorphOp::Erode, 0), m);
        assert_eq!(morph(&m, MorphOp::Dilate, 0), m);

        let square = BinaryMask::from_fn(9, 9, |x, y| (2..7).contains(&x) && (2..7).contains(&y));
        let three = BinaryMask::from_fn(9, 9, |x, y| (3..6).contains(&x) && (3..6).contains(&y));
        assert_eq!(morph(&square, MorphOp::Erode, 1), three);

        let mut dot = BinaryMask::new(5, 5);
        dot.set(2, 2, true);
        let cross = morph(&dot, MorphOp::Dilate, 1);
        assert_eq!(cross.count(), 5);
        assert!(cross.get(2, 1) && cross.get(1, 2) && cross.get(3, 2) && cross.get(2, 3));
        assert!(!cross.get(1, 1));
    }

    #[test]
    fn overlap_examples() {
        let gt = BinaryMask::from_fn(10, 2, |x, _| x < 9);
        let entity = BinaryMask::from_fn(10, 2, |_, y| y == 0);
        assert_eq!(overlap_fraction(&entity, &gt).unwrap(), 0.9);
        let inside = BinaryMask::from_fn(10, 2, |x, y| y == 1 && x < 3);
        assert_eq!(overlap_fraction(&inside, &gt).unwrap(), 1.0);
        let outside = BinaryMask::from_fn(10, 2, |x, _| x == 9);
        assert_eq!(overlap_fraction(&outside, &gt).unwrap(), 0.0);
        assert!(overlap_fraction(&BinaryMask::new(10, 2), &gt).is_err());
        assert!(overlap_fraction(&BinaryMask::new(3, 2), &gt).is_err());
    }

    fn arb_mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(any::<bool>(), w * h)
            .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
    }

    proptest! {
        #[test]
        fn dilate_grows_erode_shrinks(m in arb_mask(9, 7), k in 0u32..4) {
            prop_assert!(m.is_subset_of(&morph(&m, MorphOp::Dilate, k)));
            prop_assert!(morph(&m, MorphOp::Erode, k).is_subset_of(&m));
        }

        #[test]
        fn components_match_oracle(m in arb_mask(8, 6), four in any::<bool>()) {
            let conn = if four { Connectivity::Four } else { Connectivity::Eight };
            let cs = connected_components(&m, conn);
            let (count, mut areas) = oracle_component_count(&m, conn);
            let mut got = cs.areas().to_vec();
            got.sort_unstable();
            areas.sort_unstable();
            prop_assert_eq!(cs.count(), count);
            prop_assert_eq!(got, areas);
            prop_assert_eq!(cs.areas().iter().sum::<usize>(), m.count());
        }

        #[test]
        fn component_boxes_cover_foreground(m in arb_mask(10, 8)) {
            let boxes = connected_components(&m, Connectivity::Eight).boxes();
            for (x, y) in m.foreground() {
                prop_assert!(boxes.iter().any(|b| b.contains(x, y)));
            }
        }

        #[test]
        fn distance_matches_brute_force(m in arb_mask(9, 8)) {
            let d = distance_to_background(&m);
            for y in 0..8 {
                for x in 0..9 {
                    prop_assert!((d.get(x, y) - oracle_distance(&m, x, y)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn convex_blob_argmax_inside(cx in 5usize..15, cy in 5usize..15, r in 1usize..5) {
            let r2 = (r * r) as isize;
            let disk = BinaryMask::from_fn(20, 20, |x, y| {
                let dx = x as isize - cx as isize;
                let dy = y as isize - cy as isize;
                dx * dx + dy * dy <= r2
            });
            let (ax, ay) = distance_to_background(&disk).argmax().unwrap();
            prop_assert!(disk.get(ax, ay));
        }
    }
}
