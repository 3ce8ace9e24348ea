use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};

/// Width of each hidden layer in the default four-layer network.
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    fn fan(&self) -> (usize, usize) {
        (self.weight.shape()[1], self.weight.shape()[0])
    }
}

/// Feed-forward ReLU network; the last layer is linear and emits logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

pub(crate) fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl MlpModel {
    /// Three hidden layers of [`DEFAULT_HIDDEN`] units.
    pub fn default_dims(input: usize, classes: usize) -> Vec<usize> {
        vec![input, DEFAULT_HIDDEN, DEFAULT_HIDDEN, DEFAULT_HIDDEN, classes]
    }

    pub fn validate_dims(layer_dims: &[usize]) -> Result<()> {
        if layer_dims.len() < 2 {
            return Err(Error::contract("an MLP needs at least an input and an output size"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::contract(format!("zero-width layer in {layer_dims:?}")));
        }
        Ok(())
    }

    /// All weights and biases zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                weight: Tensor::zeros(&[w[1], w[0]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        for layer in &mut model.layers {
            let (fan_in, fan_out) = layer.fan();
            let bound = glorot_bound(fan_in, fan_out);
            for w in layer.weight.data_mut() {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(model)
    }

    pub(crate) fn from_params(layer_dims: &[usize], params: Vec<Tensor>) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("layer{l}.weight"), format!("layer{l}.bias")])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub(crate) fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        let expected: Vec<Vec<usize>> = self.params().iter().map(|t| t.shape().to_vec()).collect();
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

    /// Activations of every layer, input first, logits last.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &acts[l];
            let out_dim = layer.weight.shape()[0];
            let mut out = Vec::with_capacity(out_dim);
            for o in 0..out_dim {
                let row = layer.weight.row(o);
                let z: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
                    + layer.bias.data()[o];
                out.push(if l < last { z.max(0.0) } else { z });
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward_sample(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().expect("at least one layer")
    }

    /// Adds d(loss)/d(params) for one example into `grads`, given d(loss)/d(logits).
    pub fn accumulate_grads(&self, x: &[f64], dlogits: &[f64], grads: &mut [Tensor]) {
        let acts = self.activations(x);
        self.backward(&acts, dlogits.to_vec(), grads);
    }

    /// One forward pass; `head` turns the logits into a loss and its logit gradient.
    pub(crate) fn backprop<F>(&self, x: &[f64], grads: &mut [Tensor], head: F) -> Result<f64>
    where
        F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let acts = self.activations(x);
        let (loss, dlogits) = head(acts.last().expect("at least one layer"))?;
        self.backward(&acts, dlogits, grads);
        Ok(loss)
    }

    fn backward(&self, acts: &[Vec<f64>], mut delta: Vec<f64>, grads: &mut [Tensor]) {
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let (gw, rest) = grads[2 * l..].split_at_mut(1);
            let gw = &mut gw[0];
            let gb = &mut rest[0];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb.data_mut()[o] += d;
                for (g, &a) in gw.row_mut(o).iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; input.len()];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(layer.weight.row(o)) {
                    *p += d * w;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}
