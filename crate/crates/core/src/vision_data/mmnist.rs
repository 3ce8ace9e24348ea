//! Double-digit canvases: a 28×56 image with independent left and right
//! digit slots and a ground-truth box per present digit class.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::idx::{read_idx_images, write_idx_images};
use super::{tight_box, BoundingBox, DigitImage, DIGIT_SIDE};
use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::losses_mi::Targets;

pub const CANVAS_H: usize = DIGIT_SIDE;
pub const CANVAS_W: usize = 2 * DIGIT_SIDE;
/// Chance that each slot holds a digit.
pub const SLOT_PROBABILITY: f64 = 0.7;
/// Pixels strictly above this count as foreground for ground-truth boxes.
pub const FOREGROUND: f64 = 0.1;
pub const MMNIST_FORMAT_VERSION: &str = "miest-mmnist/1";

const IMAGES_FILE: &str = "images.idx";
const LABELS_FILE: &str = "labels.jsonl";
const MANIFEST_FILE: &str = "manifest.json";

/// Source digits grouped by class.
#[derive(Debug, Clone)]
pub struct DigitPool {
    by_class: Vec<Vec<DigitImage>>,
}

impl DigitPool {
    pub fn new(digits: Vec<DigitImage>) -> Result<Self> {
        let mut by_class: Vec<Vec<DigitImage>> = vec![Vec::new(); 10];
        for d in digits {
            if d.label > 9 || d.pixels.len() != DIGIT_SIDE * DIGIT_SIDE {
                return Err(Error::contract(format!(
                    "pool digit with label {} and {} pixels",
                    d.label,
                    d.pixels.len()
                )));
            }
            by_class[d.label as usize].push(d);
        }
        if let Some(k) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::contract(format!("digit pool has no class {k} images")));
        }
        Ok(Self { by_class })
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.by_class[class].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSample {
    /// `H × W`, values in `[0, 1]`.
    pub image: Tensor,
    /// Present classes, ascending.
    pub labels: Vec<usize>,
    /// `gt_boxes[i]` belongs to `labels[i]`.
    pub gt_boxes: Vec<BoundingBox>,
}

impl LocalizationSample {
    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn gt_box(&self, label: usize) -> Option<BoundingBox> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| self.gt_boxes[i])
    }
}

/// Stacks canvases into a `N × 1 × H × W` batch with their label sets.
pub fn training_tensors(samples: &[LocalizationSample]) -> Result<(Tensor, Targets)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Dataset("no samples".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(Error::Dataset("canvases differ in size".into()));
        }
        data.extend_from_slice(s.image.data());
    }
    let inputs = Tensor::new(vec![samples.len(), 1, h, w], data)?;
    let targets = Targets::LabelSets(samples.iter().map(|s| s.labels.clone()).collect());
    Ok((inputs, targets))
}

/// Fraction of canvases containing each class.
pub fn label_frequencies(samples: &[LocalizationSample], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for s in samples {
        for &l in &s.labels {
            counts[l] += 1;
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 / samples.len().max(1) as f64)
        .collect()
}

fn compose(pool: &DigitPool, rng: &mut RngStream) -> Result<LocalizationSample> {
    let (left, right) = loop {
        let left = rng.bernoulli(SLOT_PROBABILITY);
        let right = rng.bernoulli(SLOT_PROBABILITY);
        if left || right {
            break (left, right);
        }
    };
    let mut canvas = vec![0.0; CANVAS_H * CANVAS_W];
    let mut objects: Vec<(usize, BoundingBox)> = Vec::with_capacity(2);
    for (slot, present) in [(0usize, left), (1usize, right)] {
        if !present {
            continue;
        }
        let class = rng.below(10) as usize;
        let choices = &pool.by_class[class];
        let digit = &choices[rng.below(choices.len() as u64) as usize];
        let x0 = slot * DIGIT_SIDE;
        for r in 0..DIGIT_SIDE {
            canvas[r * CANVAS_W + x0..r * CANVAS_W + x0 + DIGIT_SIDE]
                .copy_from_slice(&digit.pixels[r * DIGIT_SIDE..(r + 1) * DIGIT_SIDE]);
        }
        let gt = tight_box(&canvas, CANVAS_W, x0..x0 + DIGIT_SIDE, FOREGROUND).ok_or_else(|| {
            Error::Dataset(format!("class {class} source digit has no foreground pixels"))
        })?;
        match objects.iter_mut().find(|(c, _)| *c == class) {
            // Same class in both slots: one label whose box spans both digits.
            Some((_, b)) => *b = b.union(&gt),
            None => objects.push((class, gt)),
        }
    }
    objects.sort_by_key(|&(c, _)| c);
    Ok(LocalizationSample {
        image: Tensor::new(vec![CANVAS_H, CANVAS_W], canvas)?,
        labels: objects.iter().map(|&(c, _)| c).collect(),
        gt_boxes: objects.iter().map(|&(_, b)| b).collect(),
    })
}

/// `n` canvases; sample `i` is drawn from stream `i` of `seed`.
pub fn make_double_digit(pool: &DigitPool, n: usize, seed: u64) -> Result<Vec<LocalizationSample>> {
    if n == 0 {
        return Err(Error::contract("make_double_digit needs n > 0"));
    }
    (0..n)
        .into_par_iter()
        .map(|i| compose(pool, &mut RngStream::new(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmnistManifest {
    pub format_version: String,
    pub seed: u64,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    /// Number of samples carrying each digit class.
    pub counts: Vec<usize>,
    /// `"synthetic"` or `"idx"`.
    pub source: String,
}

impl MmnistManifest {
    pub fn describe(samples: &[LocalizationSample], seed: u64, source: &str) -> Self {
        let mut counts = vec![0; 10];
        for s in samples {
            for &l in &s.labels {
                counts[l] += 1;
            }
        }
        Self {
            format_version: MMNIST_FORMAT_VERSION.into(),
            seed,
            n: samples.len(),
            height: CANVAS_H,
            width: CANVAS_W,
            counts,
            source: source.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    labels: Vec<usize>,
    gt_boxes: Vec<BoundingBox>,
}

fn to_u8(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `manifest.json`, `images.idx` and `labels.jsonl` into `dir`.
pub fn save_mmnist(dir: &Path, samples: &[LocalizationSample], manifest: &MmnistManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let images: Vec<Vec<u8>> = samples
        .iter()
        .map(|s| s.image.data().iter().map(|&p| to_u8(p)).collect())
        .collect();
    write_idx_images(&dir.join(IMAGES_FILE), manifest.height, manifest.width, &images)?;
    let labels_path = dir.join(LABELS_FILE);
    let mut out = Vec::new();
    for s in samples {
        let rec = LabelRecord {
            labels: s.labels.clone(),
            gt_boxes: s.gt_boxes.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    fs::write(&labels_path, out).map_err(|e| Error::io(&labels_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(&mut f, manifest)?;
    f.write_all(b"\n").map_err(|e| Error::io(&manifest_path, e))
}

pub fn is_mmnist_dir(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

pub fn load_mmnist(dir: &Path) -> Result<(MmnistManifest, Vec<LocalizationSample>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: MmnistManifest = serde_json::from_str(&text)?;
    if manifest.format_version != MMNIST_FORMAT_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported dataset version {}",
            manifest.format_version
        )));
    }
    let images = read_idx_images(&dir.join(IMAGES_FILE))?;
    if images.rows != manifest.height || images.cols != manifest.width || images.count != manifest.n {
        return Err(Error::Dataset("image file disagrees with manifest".into()));
    }
    let labels_path = dir.join(LABELS_FILE);
    let file = fs::File::open(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut samples = Vec::with_capacity(manifest.n);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&labels_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line)?;
        if i >= images.count {
            return Err(Error::Dataset("more label records than images".into()));
        }
        if rec.labels.len() != rec.gt_boxes.len()
            || rec.labels.is_empty()
            || rec.labels.iter().any(|&l| l > 9)
            || rec.gt_boxes.iter().any(|b| !b.fits(manifest.height, manifest.width))
        {
            return Err(Error::Dataset(format!("invalid label record {}", i + 1)));
        }
        let pixels = images.image(i).iter().map(|&p| f64::from(p) / 255.0).collect();
        samples.push(LocalizationSample {
            image: Tensor::new(vec![manifest.height, manifest.width], pixels)?,
            labels: rec.labels,
            gt_boxes: rec.gt_boxes,
        });
    }
    if samples.len() != manifest.n {
        return Err(Error::Dataset(format!(
            "{} label records for {} images",
            samples.len(),
            manifest.n
        )));
    }
    Ok((manifest, samples))
}
