use std::fs;
use std::path::Path;

use super::IntensityMap;
use crate::core_math::Tensor;
use crate::error::{Error, Result};

/// Binary greyscale PGM of a 2-D grid, min-max scaled to `0..=255`.
/// A constant grid is written as all 255.
pub fn encode_pgm(grid: &Tensor) -> Result<Vec<u8>> {
    if grid.ndim() != 2 {
        return Err(Error::contract("PGM needs a 2-D grid"));
    }
    let (h, w) = (grid.shape()[0], grid.shape()[1]);
    let values = grid.data();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            255
        }
    }));
    Ok(out)
}

pub fn write_pgm(grid: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pgm(grid)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_heatmap(map: &IntensityMap, path: &Path) -> Result<()> {
    write_pgm(&map.grid, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_is_white() {
        let g = Tensor::new(vec![1, 1], vec![-3.0]).unwrap();
        assert_eq!(encode_pgm(&g).unwrap(), b"P5\n1 1\n255\n\xff".to_vec());
    }

    #[test]
    fn two_cells_span_range() {
        let g = Tensor::new(vec![1, 2], vec![0.0, 0.4]).unwrap();
        let bytes = encode_pgm(&g).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 255]);
    }

    #[test]
    fn write_surfaces_io_errors() {
        let g = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert!(write_pgm(&g, Path::new("/nonexistent-dir/x.pgm")).is_err());
    }
}
