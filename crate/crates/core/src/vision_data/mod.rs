//! Digit images for the localisation experiments.

mod glyph;
mod idx;
mod mmnist;

use serde::{Deserialize, Serialize};

pub use glyph::{synth_digit, synth_pool, GLYPH_FONT};
pub use idx::{
    read_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use mmnist::{
    is_mmnist_dir, label_frequencies, load_mmnist, make_double_digit, save_mmnist, training_tensors, DigitPool,
    LocalizationSample, MmnistManifest,
    CANVAS_H, CANVAS_W, FOREGROUND, MMNIST_FORMAT_VERSION, SLOT_PROBABILITY,
};

pub const DIGIT_SIDE: usize = 28;

/// 28×28 grayscale digit with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitImage {
    pub pixels: Vec<f64>,
    pub label: u8,
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "inverted box");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x_max < width && self.y_max < height
    }
}

/// Tight box around pixels strictly above `threshold` in a row-major
/// `height × width` image, restricted to columns `cols`.
pub fn tight_box(
    pixels: &[f64],
    width: usize,
    cols: std::ops::Range<usize>,
    threshold: f64,
) -> Option<BoundingBox> {
    let height = pixels.len() / width;
    let mut found: Option<BoundingBox> = None;
    for r in 0..height {
        for c in cols.clone() {
            if pixels[r * width + c] > threshold {
                let cell = BoundingBox::new(c, r, c, r);
                found = Some(found.map_or(cell, |b| b.union(&cell)));
            }
        }
    }
    found
}
