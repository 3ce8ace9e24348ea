//! Convolutional feature extractor followed by global average pooling and a
//! biasless linear layer, so that each logit is exactly the spatial sum of
//! its class activation map.

use serde::{Deserialize, Serialize};

use super::mlp::glorot_bound;
use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStageSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// 2×2, stride 2, floor.
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGapArch {
    /// `[channels, height, width]`
    pub input: [usize; 3],
    pub stages: Vec<ConvStageSpec>,
    pub classes: usize,
}

impl ConvGapArch {
    /// A 5×5 stage with 16 channels and pooling, then a 1×1 stage with 32
    /// channels, over a single-channel image. The small receptive field (6 px)
    /// keeps feature cells close to the pixels they are scaled back onto.
    pub fn default_for(height: usize, width: usize, classes: usize) -> Self {
        Self {
            input: [1, height, width],
            stages: vec![
                ConvStageSpec {
                    out_channels: 16,
                    kernel_h: 5,
                    kernel_w: 5,
                    pool: true,
                },
                ConvStageSpec {
                    out_channels: 32,
                    kernel_h: 1,
                    kernel_w: 1,
                    pool: false,
                },
            ],
            classes,
        }
    }

    /// `[c, h, w]` entering each stage, followed by the final feature shape.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.stages.is_empty() {
            return Err(Error::contract("conv-GAP model needs at least one stage"));
        }
        if self.classes == 0 || self.input.contains(&0) {
            return Err(Error::contract(format!("degenerate architecture {self:?}")));
        }
        let mut shapes = vec![self.input];
        let [_, mut h, mut w] = self.input;
        for (i, s) in self.stages.iter().enumerate() {
            if s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0 {
                return Err(Error::contract(format!("stage {i} has a zero extent")));
            }
            if s.kernel_h > h || s.kernel_w > w {
                return Err(Error::contract(format!(
                    "stage {i} kernel {}x{} exceeds input {h}x{w}",
                    s.kernel_h, s.kernel_w
                )));
            }
            h = h - s.kernel_h + 1;
            w = w - s.kernel_w + 1;
            if s.pool {
                if h < 2 || w < 2 {
                    return Err(Error::contract(format!("stage {i} pools a {h}x{w} map")));
                }
                h /= 2;
                w /= 2;
            }
            shapes.push([s.out_channels, h, w]);
        }
        Ok(shapes)
    }

    pub fn feature_shape(&self) -> Result<[usize; 3]> {
        Ok(*self.shapes()?.last().expect("non-empty"))
    }

    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (s, input) in self.stages.iter().zip(&shapes) {
            out.push(vec![s.out_channels, input[0], s.kernel_h, s.kernel_w]);
            out.push(vec![s.out_channels]);
        }
        let k = shapes.last().expect("non-empty")[0];
        out.push(vec![self.classes, k]);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage {
    /// `out × in × kh × kw`
    pub weight: Tensor,
    pub bias: Tensor,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGapModel {
    arch: ConvGapArch,
    shapes: Vec<[usize; 3]>,
    stages: Vec<ConvStage>,
    /// `M × K`, no bias.
    head: Tensor,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Input to each stage.
    inputs: Vec<Vec<f64>>,
    /// Post-ReLU conv output of each stage (before pooling).
    activated: Vec<Vec<f64>>,
    /// For pooled stages, flat index into `activated` of each pooled cell's source.
    pool_src: Vec<Vec<usize>>,
    features: Vec<f64>,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

fn conv_valid(
    x: &[f64],
    [c_in, h, w]: [usize; 3],
    weight: &Tensor,
    bias: &Tensor,
) -> (Vec<f64>, usize, usize) {
    let [c_out, _, kh, kw] = [
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    ];
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    let wd = weight.data();
    for o in 0..c_out {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias.data()[o]);
        for c in 0..c_in {
            for u in 0..kh {
                for v in 0..kw {
                    let k = wd[((o * c_in + c) * kh + u) * kw + v];
                    for i in 0..oh {
                        let src = &x[(c * h + i + u) * w + v..][..ow];
                        let dst = &mut plane[i * ow..(i + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn max_pool(x: &[f64], [c, h, w]: [usize; 3]) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut src = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for i in 0..ph {
            for j in 0..pw {
                let base = (ch * h + 2 * i) * w + 2 * j;
                let mut best = base;
                // Scan order (0,0), (0,1), (1,0), (1,1); strict > keeps the first maximum.
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                src.push(best);
            }
        }
    }
    (out, src)
}

impl ConvGapModel {
    pub fn zeros(arch: ConvGapArch) -> Result<Self> {
        let shapes = arch.shapes()?;
        let param_shapes = arch.param_shapes()?;
        let stages = arch
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| ConvStage {
                weight: Tensor::zeros(&param_shapes[2 * i]),
                bias: Tensor::zeros(&param_shapes[2 * i + 1]),
                pool: s.pool,
            })
            .collect();
        let head = Tensor::zeros(param_shapes.last().expect("head shape"));
        Ok(Self {
            arch,
            shapes,
            stages,
            head,
        })
    }

    /// Glorot-uniform kernels and head, zero biases.
    pub fn new(arch: ConvGapArch, rng: &mut RngStream) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        for stage in &mut model.stages {
            let s = stage.weight.shape().to_vec();
            let field = s[2] * s[3];
            let bound = glorot_bound(s[1] * field, s[0] * field);
            stage
                .weight
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = rng.uniform(-bound, bound));
        }
        let (m, k) = (model.head.shape()[0], model.head.shape()[1]);
        let bound = glorot_bound(k, m);
        model
            .head
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-bound, bound));
        Ok(model)
    }

    pub(crate) fn from_params(arch: ConvGapArch, params: Vec<Tensor>) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn arch(&self) -> &ConvGapArch {
        &self.arch
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.arch.input
    }

    pub fn feature_shape(&self) -> [usize; 3] {
        *self.shapes.last().expect("non-empty")
    }

    pub fn num_classes(&self) -> usize {
        self.arch.classes
    }

    pub fn stages(&self) -> &[ConvStage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [ConvStage] {
        &mut self.stages
    }

    /// Class weights `W` (`M × K`) of the final layer.
    pub fn head(&self) -> &Tensor {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Tensor {
        &mut self.head
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.stages.len())
            .flat_map(|i| [format!("conv{i}.weight"), format!("conv{i}.bias")])
            .collect();
        names.push("head.weight".into());
        names
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self
            .stages
            .iter()
            .flat_map(|s| [&s.weight, &s.bias])
            .collect();
        p.push(&self.head);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self
            .stages
            .iter_mut()
            .flat_map(|s| [&mut s.weight, &mut s.bias])
            .collect();
        p.push(&mut self.head);
        p
    }

    pub(crate) fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        let expected = self.arch.param_shapes()?;
        if params.len() != expected.len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (p, shape) in params.iter().zip(&expected) {
            if p.shape() != shape.as_slice() {
                return Err(Error::contract(format!(
                    "parameter shape {:?} where {shape:?} was expected",
                    p.shape()
                )));
            }
        }
        for (slot, p) in self.params_mut().into_iter().zip(params) {
            *slot = p;
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.stages.len());
        let mut activated = Vec::with_capacity(self.stages.len());
        let mut pool_src = Vec::with_capacity(self.stages.len());
        let mut current = x.to_vec();
        for (i, stage) in self.stages.iter().enumerate() {
            let (mut out, oh, ow) = conv_valid(&current, self.shapes[i], &stage.weight, &stage.bias);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            let next = if stage.pool {
                let c = stage.weight.shape()[0];
                let (pooled, src) = max_pool(&out, [c, oh, ow]);
                pool_src.push(src);
                pooled
            } else {
                pool_src.push(Vec::new());
                out.clone()
            };
            inputs.push(current);
            activated.push(out);
            current = next;
        }
        let [k, h, w] = self.feature_shape();
        let cells = (h * w) as f64;
        let pooled: Vec<f64> = (0..k)
            .map(|ch| current[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / cells)
            .collect();
        let logits = (0..self.arch.classes)
            .map(|y| {
                self.head
                    .row(y)
                    .iter()
                    .zip(&pooled)
                    .map(|(w, g)| w * g)
                    .sum()
            })
            .collect();
        Trace {
            inputs,
            activated,
            pool_src,
            features: current,
            pooled,
            logits,
        }
    }

    pub fn forward_sample(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).logits
    }

    /// Logits plus the final feature maps `g_k` (`K × H × W`) before pooling.
    pub fn forward_with_features(&self, x: &[f64]) -> (Vec<f64>, Tensor) {
        let t = self.trace(x);
        let features = Tensor::new(self.feature_shape().to_vec(), t.features)
            .expect("feature shape is consistent by construction");
        (t.logits, features)
    }

    pub fn accumulate_grads(&self, x: &[f64], dlogits: &[f64], grads: &mut [Tensor]) {
        let t = self.trace(x);
        self.backward(&t, dlogits, grads);
    }

    /// One forward pass; `head` turns the logits into a loss and its logit gradient.
    pub(crate) fn backprop<F>(&self, x: &[f64], grads: &mut [Tensor], head: F) -> Result<f64>
    where
        F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let t = self.trace(x);
        let (loss, dlogits) = head(&t.logits)?;
        self.backward(&t, &dlogits, grads);
        Ok(loss)
    }

    fn backward(&self, t: &Trace, dlogits: &[f64], grads: &mut [Tensor]) {
        let [k, h, w] = self.feature_shape();
        let cells = (h * w) as f64;
        let n_stages = self.stages.len();

        // Head: logits_y = Σ_k W[y,k] · mean(g_k)
        let mut dpooled = vec![0.0; k];
        {
            let gh = &mut grads[2 * n_stages];
            for (y, &d) in dlogits.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for ((g, &p), (dp, &wv)) in gh
                    .row_mut(y)
                    .iter_mut()
                    .zip(&t.pooled)
                    .zip(dpooled.iter_mut().zip(self.head.row(y)))
                {
                    *g += d * p;
                    *dp += d * wv;
                }
            }
        }
        let mut dcur: Vec<f64> = dpooled
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d / cells, h * w))
            .collect();

        for i in (0..n_stages).rev() {
            let stage = &self.stages[i];
            let act = &t.activated[i];
            // Undo pooling.
            let mut dact = if stage.pool {
                let mut d = vec![0.0; act.len()];
                for (&src, &g) in t.pool_src[i].iter().zip(&dcur) {
                    d[src] += g;
                }
                d
            } else {
                dcur
            };
            // ReLU
            for (d, &a) in dact.iter_mut().zip(act) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let [c_in, ih, iw] = self.shapes[i];
            let ws = stage.weight.shape();
            let (c_out, kh, kw) = (ws[0], ws[2], ws[3]);
            let oh = ih - kh + 1;
            let ow = iw - kw + 1;
            let input = &t.inputs[i];
            let need_dx = i > 0;
            let mut dx = if need_dx { vec![0.0; input.len()] } else { Vec::new() };
            let (gw, rest) = grads[2 * i..].split_at_mut(1);
            let gw = gw[0].data_mut();
            let gb = rest[0].data_mut();
            let wd = stage.weight.data();
            for o in 0..c_out {
                let plane = &dact[o * oh * ow..(o + 1) * oh * ow];
                gb[o] += plane.iter().sum::<f64>();
                for c in 0..c_in {
                    for u in 0..kh {
                        for v in 0..kw {
                            let widx = ((o * c_in + c) * kh + u) * kw + v;
                            let mut acc = 0.0;
                            for a in 0..oh {
                                let src = &input[(c * ih + a + u) * iw + v..][..ow];
                                acc += dot(&plane[a * ow..(a + 1) * ow], src);
                            }
                            gw[widx] += acc;
                            if need_dx {
                                let kv = wd[widx];
                                for a in 0..oh {
                                    let d = &plane[a * ow..(a + 1) * ow];
                                    let dst = &mut dx[(c * ih + a + u) * iw + v..][..ow];
                                    for (p, q) in dst.iter_mut().zip(d) {
                                        *p += kv * q;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dcur = dx;
        }
        debug_assert_eq!(t.features.len(), k * h * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity() {
        let arch = ConvGapArch {
            input: [1, 3, 4],
            stages: vec![ConvStageSpec {
                out_channels: 1,
                kernel_h: 1,
                kernel_w: 1,
                pool: false,
            }],
            classes: 1,
        };
        let mut model = ConvGapModel::zeros(arch).unwrap();
        model.stages_mut()[0].weight.data_mut()[0] = 1.0;
        model.head_mut().data_mut()[0] = 1.0;
        let c = 0.625;
        assert_eq!(model.forward_sample(&[c; 12]), vec![c]);
    }

    #[test]
    fn default_arch_shapes() {
        let arch = ConvGapArch::default_for(28, 56, 10);
        assert_eq!(arch.feature_shape().unwrap(), [32, 12, 26]);
        let shapes = arch.param_shapes().unwrap();
        assert_eq!(shapes[0], vec![16, 1, 5, 5]);
        assert_eq!(shapes[2], vec![32, 16, 1, 1]);
        assert_eq!(shapes[4], vec![10, 32]);
    }

    #[test]
    fn pool_ties_take_first() {
        let (out, src) = max_pool(&[1.0, 1.0, 1.0, 1.0], [1, 2, 2]);
        assert_eq!(out, vec![1.0]);
        assert_eq!(src, vec![0]);
        let (_, src) = max_pool(&[0.0, 2.0, 2.0, 1.0], [1, 2, 2]);
        assert_eq!(src, vec![1]);
    }

    #[test]
    fn rejects_oversized_kernel() {
        let arch = ConvGapArch {
            input: [1, 2, 2],
            stages: vec![ConvStageSpec {
                out_channels: 1,
                kernel_h: 3,
                kernel_w: 3,
                pool: false,
            }],
            classes: 2,
        };
        assert!(ConvGapModel::zeros(arch).is_err());
    }
}
