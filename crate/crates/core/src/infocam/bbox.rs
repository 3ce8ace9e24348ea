use std::collections::VecDeque;

use super::IntensityMap;
use crate::error::{Error, Result};
use crate::vision_data::BoundingBox;

/// Cells at or above this fraction of the normalised range are kept.
pub const DEFAULT_THRESHOLD_RATIO: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxExtraction {
    /// Box in input-image pixels.
    pub bbox: BoundingBox,
    /// Cells of the selected component, row-major over the map grid.
    pub mask: Vec<bool>,
}

/// 8-connected components of `mask` (`h × w`, row-major). Each component
/// lists its cells in ascending scan order; components are ordered by their
/// first cell.
pub fn connected_components(mask: &[bool], h: usize, w: usize) -> Vec<Vec<usize>> {
    assert_eq!(mask.len(), h * w, "mask size mismatch");
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(cell) = queue.pop_front() {
            cells.push(cell);
            let (r, c) = ((cell / w) as isize, (cell % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let n = nr as usize * w + nc as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        cells.sort_unstable();
        components.push(cells);
    }
    components
}

/// Threshold a min-max normalised map, keep its largest 8-connected component
/// (ties: the component whose first cell comes first in scan order) and scale
/// the component's footprint to input pixels.
pub fn extract_bbox(
    map: &IntensityMap,
    input_h: usize,
    input_w: usize,
    threshold_ratio: f64,
) -> Result<BoxExtraction> {
    let (gh, gw) = (map.height(), map.width());
    if input_h < map.source_h || input_w < map.source_w {
        return Err(Error::contract(format!(
            "input {input_h}x{input_w} smaller than feature grid {}x{}",
            map.source_h, map.source_w
        )));
    }
    let values = map.grid.data();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<bool> = if hi > lo {
        values
            .iter()
            .map(|&v| (v - lo) / (hi - lo) >= threshold_ratio)
            .collect()
    } else {
        vec![true; values.len()]
    };
    let components = connected_components(&keep, gh, gw);
    let mut best: &[usize] = &[];
    for comp in &components {
        if comp.len() > best.len() {
            best = comp;
        }
    }
    // The maximum cell always survives a ratio ≤ 1, so `best` is non-empty
    // unless the ratio is larger than 1.
    if best.is_empty() {
        return Err(Error::contract(format!(
            "threshold ratio {threshold_ratio} leaves no cells"
        )));
    }
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    let mut mask = vec![false; values.len()];
    for &cell in best {
        mask[cell] = true;
        let (r, c) = (cell / gw, cell % gw);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    // Window (a, b) covers feature cells a..a+R-1; feature cell i covers
    // pixels [i·s, (i+1)·s) with s = input / feature extent.
    let scale = |lo: usize, hi_excl: usize, src: usize, dst: usize| {
        let s = dst as f64 / src as f64;
        let a = (lo as f64 * s).floor() as usize;
        let b = ((hi_excl as f64 * s).ceil() as usize).clamp(1, dst) - 1;
        (a.min(dst - 1), b.max(a.min(dst - 1)))
    };
    let (y_min, y_max) = scale(r0, r1 + map.region, map.source_h, input_h);
    let (x_min, x_max) = scale(c0, c1 + map.region, map.source_w, input_w);
    Ok(BoxExtraction {
        bbox: BoundingBox::new(x_min, y_min, x_max, y_max),
        mask,
    })
}

/// Intersection over union with inclusive pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix0 = a.x_min.max(b.x_min);
    let iy0 = a.y_min.max(b.y_min);
    let ix1 = a.x_max.min(b.x_max);
    let iy1 = a.y_max.min(b.y_max);
    if ix0 > ix1 || iy0 > iy1 {
        return 0.0;
    }
    let inter = (ix1 - ix0 + 1) * (iy1 - iy0 + 1);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}
