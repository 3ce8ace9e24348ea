//! Procedural digits from a 5×7 bitmap font, so the localisation pipeline
//! can run without downloading MNIST.

use super::{DigitImage, DIGIT_SIDE};
use crate::core_math::RngStream;
use crate::error::{Error, Result};

/// One row per entry, most significant of the low five bits is the leftmost column.
pub const GLYPH_FONT: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

const GLYPH_SIDE: usize = 20;
const JITTER: i64 = 2;

fn font_on(class: usize, r: usize, c: usize) -> bool {
    let row = GLYPH_FONT[class][r * 7 / GLYPH_SIDE];
    let col = c * 5 / GLYPH_SIDE;
    row & (1 << (4 - col)) != 0
}

/// The font glyph nearest-neighbour scaled to 20×20, centred in 28×28, shifted
/// by up to ±2 px and with per-pixel intensity in `[0.6, 1]`. Values are
/// multiples of 1/255 so they survive an 8-bit round trip.
pub fn synth_digit(class: u8, rng: &mut RngStream) -> Result<DigitImage> {
    let c = class as usize;
    if c > 9 {
        return Err(Error::contract(format!("digit class {class} outside 0-9")));
    }
    let dx = rng.below(2 * JITTER as u64 + 1) as i64 - JITTER;
    let dy = rng.below(2 * JITTER as u64 + 1) as i64 - JITTER;
    let offset = ((DIGIT_SIDE - GLYPH_SIDE) / 2) as i64;
    let mut pixels = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
    for r in 0..GLYPH_SIDE {
        for col in 0..GLYPH_SIDE {
            if !font_on(c, r, col) {
                continue;
            }
            let y = (r as i64 + offset + dy) as usize;
            let x = (col as i64 + offset + dx) as usize;
            let level = (rng.uniform(0.6, 1.0) * 255.0).round();
            pixels[y * DIGIT_SIDE + x] = level / 255.0;
        }
    }
    Ok(DigitImage {
        pixels,
        label: class,
    })
}

/// `per_class` synthetic digits of every class; class `k` draws from stream `k`.
pub fn synth_pool(per_class: usize, seed: u64) -> Vec<DigitImage> {
    (0u8..10)
        .flat_map(|k| {
            let mut rng = RngStream::new(seed, u64::from(k));
            (0..per_class)
                .map(move |_| synth_digit(k, &mut rng).expect("class in range"))
                .collect::<Vec<_>>()
        })
        .collect()
}
