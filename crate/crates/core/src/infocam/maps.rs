use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::core_math::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    Cam,
    Infocam,
    InfocamPlus,
}

impl MapMode {
    pub const ALL: [MapMode; 3] = [MapMode::Cam, MapMode::Infocam, MapMode::InfocamPlus];

    pub fn as_str(&self) -> &'static str {
        match self {
            MapMode::Cam => "cam",
            MapMode::Infocam => "infocam",
            MapMode::InfocamPlus => "infocam-plus",
        }
    }
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cam" => Ok(MapMode::Cam),
            "infocam" => Ok(MapMode::Infocam),
            "infocam-plus" | "infocam+" => Ok(MapMode::InfocamPlus),
            other => Err(Error::contract(format!("unknown map mode {other:?}"))),
        }
    }
}

/// Where infoCAM+ picks its least likely competitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArgminScope {
    /// Separately for every region window.
    #[default]
    PerWindow,
    /// Once, from the logits of the whole image.
    Global,
}

/// Region scores over the sliding `R × R` windows of an `H × W` feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    /// `(H - R + 1) × (W - R + 1)`
    pub grid: Tensor,
    pub mode: MapMode,
    pub region: usize,
    pub source_h: usize,
    pub source_w: usize,
}

impl IntensityMap {
    pub fn height(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.grid.shape()[1]
    }
}

fn check_inputs(features: &Tensor, weights: &Tensor, y: usize) -> Result<(usize, usize, usize, usize)> {
    if features.ndim() != 3 || weights.ndim() != 2 {
        return Err(Error::contract(format!(
            "features must be K×H×W and weights M×K, got {:?} and {:?}",
            features.shape(),
            weights.shape()
        )));
    }
    let (k, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let m = weights.shape()[0];
    if weights.shape()[1] != k {
        return Err(Error::contract(format!(
            "{k} feature maps but weights have {} columns",
            weights.shape()[1]
        )));
    }
    if y >= m {
        return Err(Error::contract(format!("class {y} out of range for {m} classes")));
    }
    Ok((k, h, w, m))
}

fn check_region(r: usize, h: usize, w: usize) -> Result<()> {
    if r == 0 || r > h.min(w) {
        return Err(Error::contract(format!(
            "region size {r} outside [1, {}]",
            h.min(w)
        )));
    }
    Ok(())
}

/// `M_m(a, b) = (1/(H·W)) Σ_k W[m,k] g_k(a, b)` for every class `m`: `M × H × W`.
///
/// The `1/(H·W)` factor is the average-pooling constant, so each class plane
/// sums to that class's logit.
pub fn class_cell_scores(features: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (_, h, w, m) = check_inputs(features, weights, 0)?;
    let cells = h * w;
    let scale = 1.0 / cells as f64;
    let mut out = vec![0.0; m * cells];
    for class in 0..m {
        let plane = &mut out[class * cells..(class + 1) * cells];
        for (ch, &wk) in weights.row(class).iter().enumerate() {
            let g = &features.data()[ch * cells..(ch + 1) * cells];
            for (p, &v) in plane.iter_mut().zip(g) {
                *p += wk * v;
            }
        }
        plane.iter_mut().for_each(|p| *p *= scale);
    }
    Tensor::new(vec![m, h, w], out)
}

/// Sums of every `r × r` window of an `h × w` plane.
fn window_sums(plane: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let (oh, ow) = (h - r + 1, w - r + 1);
    let mut out = Vec::with_capacity(oh * ow);
    for a in 0..oh {
        for b in 0..ow {
            let mut s = 0.0;
            for i in a..a + r {
                s += plane[i * w + b..i * w + b + r].iter().sum::<f64>();
            }
            out.push(s);
        }
    }
    out
}

fn build(grid: Vec<f64>, mode: MapMode, r: usize, h: usize, w: usize) -> Result<IntensityMap> {
    Ok(IntensityMap {
        grid: Tensor::new(vec![h - r + 1, w - r + 1], grid)?,
        mode,
        region: r,
        source_h: h,
        source_w: w,
    })
}

/// Class activation map of class `y`; its cells sum to logit `y`.
pub fn cam_map(features: &Tensor, weights: &Tensor, y: usize) -> Result<IntensityMap> {
    let (_, h, w, _) = check_inputs(features, weights, y)?;
    let scores = class_cell_scores(features, weights)?;
    build(scores.row(y).to_vec(), MapMode::Cam, 1, h, w)
}

/// Per-window PMI difference between `y` and the mean of all other classes.
pub fn infocam_map(features: &Tensor, weights: &Tensor, y: usize, r: usize) -> Result<IntensityMap> {
    let (_, h, w, m) = check_inputs(features, weights, y)?;
    check_region(r, h, w)?;
    if m < 2 {
        return Err(Error::contract("infoCAM needs at least two classes"));
    }
    let scores = class_cell_scores(features, weights)?;
    let diff: Vec<f64> = (0..h * w)
        .map(|cell| {
            let others: f64 = (0..m)
                .filter(|&c| c != y)
                .map(|c| scores.row(c)[cell])
                .sum();
            scores.row(y)[cell] - others / (m - 1) as f64
        })
        .collect();
    build(window_sums(&diff, h, w, r), MapMode::Infocam, r, h, w)
}

/// Per-window PMI difference between `y` and the class with the smallest
/// window score (excluding `y`; ties go to the lowest class index).
pub fn infocam_plus_map(
    features: &Tensor,
    weights: &Tensor,
    y: usize,
    r: usize,
    scope: ArgminScope,
) -> Result<IntensityMap> {
    let (_, h, w, m) = check_inputs(features, weights, y)?;
    check_region(r, h, w)?;
    if m < 2 {
        return Err(Error::contract("infoCAM+ needs at least two classes"));
    }
    let scores = class_cell_scores(features, weights)?;
    let windows: Vec<Vec<f64>> = (0..m)
        .map(|c| window_sums(scores.row(c), h, w, r))
        .collect();
    let argmin = |values: &dyn Fn(usize) -> f64| {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..m).filter(|&c| c != y) {
            let v = values(c);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((c, v));
            }
        }
        best.expect("m >= 2").0
    };
    let global = match scope {
        ArgminScope::Global => Some(argmin(&|c| scores.row(c).iter().sum())),
        ArgminScope::PerWindow => None,
    };
    let grid = (0..windows[y].len())
        .map(|i| {
            let rival = global.unwrap_or_else(|| argmin(&|c| windows[c][i]));
            windows[y][i] - windows[rival][i]
        })
        .collect();
    build(grid, MapMode::InfocamPlus, r, h, w)
}

pub fn intensity_map(
    mode: MapMode,
    features: &Tensor,
    weights: &Tensor,
    y: usize,
    r: usize,
    scope: ArgminScope,
) -> Result<IntensityMap> {
    match mode {
        MapMode::Cam => cam_map(features, weights, y),
        MapMode::Infocam => infocam_map(features, weights, y, r),
        MapMode::InfocamPlus => infocam_plus_map(features, weights, y, r, scope),
    }
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn upsample_bilinear(grid: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if grid.ndim() != 2 || out_h == 0 || out_w == 0 {
        return Err(Error::contract("bilinear resize needs a 2-D grid and positive extents"));
    }
    let (h, w) = (grid.shape()[0], grid.shape()[1]);
    let coord = |o: usize, out: usize, src: usize| {
        let x = ((o as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(src - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (r0, r1, fy) = coord(i, out_h, h);
        for j in 0..out_w {
            let (c0, c1, fx) = coord(j, out_w, w);
            let top = grid.get(&[r0, c0]) * (1.0 - fx) + grid.get(&[r0, c1]) * fx;
            let bottom = grid.get(&[r1, c0]) * (1.0 - fx) + grid.get(&[r1, c1]) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}
