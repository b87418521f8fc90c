//! Local dataset layouts and mask decoding.
//!
//! Image datasets:
//!
//! ```text
//! <root>/images/<stem>.{jpg,jpeg,png,bmp,tif,tiff}
//! <root>/masks/<stem>.{png,bmp,tif,tiff}
//! ```
//!
//! Video and volume datasets add one subdirectory per sequence:
//! `<root>/images/<seq>/<frame>.*` and `<root>/masks/<seq>/<frame>.*`.
//! Images pair with masks by file stem. Frames (and images) sort by numeric
//! stem when the stem is an integer, so `2` comes before `10` and `007`
//! equals `7`; other stems sort after numeric ones, by text.
//!
//! Masks are 8-bit grayscale; a pixel is foreground when its value is above
//! 127. Instance or class labels are therefore collapsed to one binary mask.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use segeval_core::oracle::GtStore;
use segeval_core::sequence::{Frame, SequenceKind, SequenceRecord};
use segeval_core::{BinaryMask, ImageRef};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),
    #[error("no image/mask pairs under {0}")]
    NoPairs(PathBuf),
    #[error("cannot read {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("{path} is {found}, masks must be 8-bit grayscale (convert with e.g. `magick in.png -colorspace Gray -depth 8 out.png`)")]
    NotGrayscale { path: PathBuf, found: String },
    #[error("{mask} does not match its neighbours: {message}")]
    Dimensions { mask: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Image,
    Video,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// One image with its mask. `id` is the file stem, prefixed with the
/// sequence name for frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl SampleEntry {
    /// Reference sent to segmenters: the image path as scanned.
    pub fn image_ref(&self) -> ImageRef {
        ImageRef(self.image.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub frames: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: DatasetKind,
    pub split: Split,
    pub root: PathBuf,
    /// Image datasets only.
    pub samples: Vec<SampleEntry>,
    /// Video and volume datasets only.
    pub sequences: Vec<SequenceEntry>,
    pub unmatched_images: Vec<PathBuf>,
    pub unmatched_masks: Vec<PathBuf>,
}

impl DatasetManifest {
    /// Every image/mask pair, frames included, in dataset order.
    pub fn entries(&self) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().chain(self.sequences.iter().flat_map(|s| s.frames.iter()))
    }

    pub fn pair_count(&self) -> usize {
        self.entries().count()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .unmatched_images
            .iter()
            .map(|p| format!("{}: image has no mask", p.display()))
            .chain(self.unmatched_masks.iter().map(|p| format!("{}: mask has no image", p.display())))
            .collect();
        if let Some(expected) = known_count(&self.name, self.split) {
            let n = if self.kind == DatasetKind::Image { self.samples.len() } else { self.sequences.len() };
            if n != expected {
                out.push(format!("{} {:?} usually has {expected} samples, found {n}", self.name, self.split));
            }
        }
        out
    }
}

const IMAGE_EXT: [&str; 6] = ["jpg", "jpeg", "png", "bmp", "tif", "tiff"];
const MASK_EXT: [&str; 4] = ["png", "bmp", "tif", "tiff"];

/// Published sizes of common benchmark splits. Only used to warn when a local
/// copy looks partial.
const KNOWN_COUNTS: [(&str, Split, usize); 17] = [
    ("duts", Split::Test, 5019),
    ("duts", Split::Train, 10553),
    ("ecssd", Split::Test, 1000),
    ("dutomron", Split::Test, 5168),
    ("hkuis", Split::Test, 1447),
    ("pascals", Split::Test, 850),
    ("camo", Split::Test, 1250),
    ("cod10k", Split::Test, 5066),
    ("nc4k", Split::Test, 4121),
    ("sbu", Split::Test, 700),
    ("istd", Split::Test, 540),
    ("istd", Split::Train, 1330),
    ("kvasir", Split::Test, 1000),
    ("etis", Split::Test, 196),
    ("cvcclinicdb", Split::Test, 612),
    ("cvccolondb", Split::Test, 380),
    ("endoscene", Split::Test, 912),
];

pub fn known_count(name: &str, split: Split) -> Option<usize> {
    let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
    KNOWN_COUNTS.iter().find(|(n, s, _)| *n == key && *s == split).map(|t| t.2)
}

/// Orders stems numerically when both are integers, numeric before text
/// otherwise.
pub fn stem_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u128>(), b.parse::<u128>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn has_ext(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let rd = fs::read_dir(dir).map_err(|e| DatasetError::Unreadable { path: dir.to_path_buf(), message: e.to_string() })?;
    let mut out = Vec::new();
    for e in rd {
        let e = e.map_err(|e| DatasetError::Unreadable { path: dir.to_path_buf(), message: e.to_string() })?;
        out.push(e.path());
    }
    out.sort();
    Ok(out)
}

fn files_by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, Vec<PathBuf>>, DatasetError> {
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for p in read_dir_sorted(dir)? {
        if p.is_file() && has_ext(&p, exts) {
            out.entry(stem(&p)).or_default().push(p);
        }
    }
    Ok(out)
}

struct Paired {
    pairs: Vec<SampleEntry>,
    unmatched_images: Vec<PathBuf>,
    unmatched_masks: Vec<PathBuf>,
}

fn pair_dir(images: &Path, masks: &Path, prefix: Option<&str>) -> Result<Paired, DatasetError> {
    let imgs = files_by_stem(images, &IMAGE_EXT)?;
    let mut msks = if masks.is_dir() { files_by_stem(masks, &MASK_EXT)? } else { BTreeMap::new() };
    let mut pairs = Vec::new();
    let mut unmatched_images = Vec::new();
    for (s, paths) in imgs {
        let mut paths = paths.into_iter();
        let image = paths.next().expect("nonempty group");
        // Same stem with two extensions: the extra images cannot pair.
        unmatched_images.extend(paths);
        match msks.get_mut(&s).and_then(|m| if m.is_empty() { None } else { Some(m.remove(0)) }) {
            Some(mask) => {
                let id = match prefix {
                    Some(p) => format!("{p}/{s}"),
                    None => s,
                };
                pairs.push(SampleEntry { id, image, mask });
            }
            None => unmatched_images.push(image),
        }
    }
    pairs.sort_by(|a, b| stem_order(&stem(&a.image), &stem(&b.image)));
    Ok(Paired { pairs, unmatched_images, unmatched_masks: msks.into_values().flatten().collect() })
}

/// Scans a dataset root. Unpaired files are listed, never dropped silently.
pub fn scan_dataset(root: &Path, kind: DatasetKind, split: Split) -> Result<DatasetManifest, DatasetError> {
    let images = root.join("images");
    let masks = root.join("masks");
    for d in [&images, &masks] {
        if !d.is_dir() {
            return Err(DatasetError::MissingDirectory(d.clone()));
        }
    }
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut m = DatasetManifest {
        name,
        kind,
        split,
        root: root.to_path_buf(),
        samples: Vec::new(),
        sequences: Vec::new(),
        unmatched_images: Vec::new(),
        unmatched_masks: Vec::new(),
    };
    match kind {
        DatasetKind::Image => {
            let p = pair_dir(&images, &masks, None)?;
            m.samples = p.pairs;
            m.unmatched_images = p.unmatched_images;
            m.unmatched_masks = p.unmatched_masks;
        }
        DatasetKind::Video | DatasetKind::Volume => {
            let mut seqs: Vec<PathBuf> = read_dir_sorted(&images)?.into_iter().filter(|p| p.is_dir()).collect();
            seqs.sort_by(|a, b| stem_order(&file_name(a), &file_name(b)));
            for dir in seqs {
                let id = file_name(&dir);
                let p = pair_dir(&dir, &masks.join(&id), Some(&id))?;
                m.unmatched_images.extend(p.unmatched_images);
                m.unmatched_masks.extend(p.unmatched_masks);
                if !p.pairs.is_empty() {
                    m.sequences.push(SequenceEntry { id, frames: p.pairs });
                }
            }
            for d in read_dir_sorted(&masks)? {
                if d.is_dir() && !images.join(file_name(&d)).is_dir() {
                    m.unmatched_masks.extend(files_by_stem(&d, &MASK_EXT)?.into_values().flatten());
                }
            }
        }
    }
    if m.pair_count() == 0 {
        return Err(DatasetError::NoPairs(root.to_path_buf()));
    }
    Ok(m)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Decodes an 8-bit grayscale mask; values above 127 are foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask, DatasetError> {
    let img = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| DatasetError::Unreadable { path: path.to_path_buf(), message: e.to_string() })?
        .decode()
        .map_err(|e| DatasetError::Unreadable { path: path.to_path_buf(), message: e.to_string() })?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(DatasetError::NotGrayscale { path: path.to_path_buf(), found: format!("{:?}", other.color()) })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if w == 0 || h == 0 {
        return Err(DatasetError::Unreadable { path: path.to_path_buf(), message: "empty raster".into() });
    }
    let bits = gray.into_raw().into_iter().map(|v| v > 127).collect();
    Ok(BinaryMask::from_bits(w, h, bits).expect("dimensions from the decoder"))
}

/// Writes a mask as an 8-bit grayscale PNG (0 / 255).
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), DatasetError> {
    let raw: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("size matches");
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DatasetError::Unreadable { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DatasetError::Unreadable { path: path.to_path_buf(), message: e.to_string() })
}

/// A scanned dataset with every mask decoded.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    /// Image datasets: one mask per sample, in manifest order.
    pub masks: Vec<BinaryMask>,
    /// Video and volume datasets.
    pub sequences: Vec<(String, SequenceRecord)>,
}

impl LoadedDataset {
    pub fn load(manifest: DatasetManifest) -> Result<Self, DatasetError> {
        use rayon::prelude::*;
        let masks: Vec<BinaryMask> =
            manifest.samples.par_iter().map(|s| load_mask(&s.mask)).collect::<Result<_, _>>()?;
        let mut sequences = Vec::with_capacity(manifest.sequences.len());
        for seq in &manifest.sequences {
            let gts: Vec<BinaryMask> = seq.frames.par_iter().map(|f| load_mask(&f.mask)).collect::<Result<_, _>>()?;
            let frames: Vec<Frame> =
                seq.frames.iter().zip(gts).map(|(f, gt)| Frame { image: f.image_ref(), gt }).collect();
            let kind = if manifest.kind == DatasetKind::Volume { SequenceKind::Volume } else { SequenceKind::Video };
            let record = SequenceRecord::new(kind, frames).map_err(|e| DatasetError::Dimensions {
                mask: seq.frames[0].mask.clone(),
                message: e.to_string(),
            })?;
            sequences.push((seq.id.clone(), record));
        }
        Ok(Self { manifest, masks, sequences })
    }

    pub fn scan_and_load(root: &Path, kind: DatasetKind, split: Split) -> Result<Self, DatasetError> {
        Self::load(scan_dataset(root, kind, split)?)
    }

    /// Ground truth keyed by image reference, for the bundled oracles.
    pub fn gt_store(&self) -> GtStore {
        let mut store = GtStore::new();
        for (s, m) in self.manifest.samples.iter().zip(&self.masks) {
            store.insert(s.image_ref(), m.clone());
        }
        for (_, seq) in &self.sequences {
            for f in seq.frames() {
                store.insert(f.image.clone(), f.gt.clone());
            }
        }
        store
    }
}
