//! The two fixed network families and their training machinery.

mod adam;
mod conv;
mod mlp;
mod persist;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use conv::{ConvGapArch, ConvGapModel, ConvStage, ConvStageSpec};
pub use mlp::{Dense, MlpModel, DEFAULT_HIDDEN};
pub use persist::{load_model, save_model, to_json_string, MODEL_FORMAT_VERSION};
pub use train::{train, EpochSummary, TrainConfig};

use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::losses_mi::{loss_and_logit_grad, LossSpec, Targets};

/// Samples per gradient chunk. Chunks may run in parallel; their partial sums
/// are always combined in chunk order, so results do not depend on threading.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp { layer_dims: Vec<usize> },
    ConvGap(ConvGapArch),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Mlp(MlpModel),
    ConvGap(ConvGapModel),
}

impl Network {
    /// Freshly initialised parameters drawn from `rng`.
    pub fn init(arch: &Architecture, rng: &mut RngStream) -> Result<Self> {
        Ok(match arch {
            Architecture::Mlp { layer_dims } => Network::Mlp(MlpModel::new(layer_dims, rng)?),
            Architecture::ConvGap(a) => Network::ConvGap(ConvGapModel::new(a.clone(), rng)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Network::Mlp(m) => Architecture::Mlp {
                layer_dims: m.layer_dims().to_vec(),
            },
            Network::ConvGap(m) => Architecture::ConvGap(m.arch().clone()),
        }
    }

    /// Per-sample input shape (without the batch axis).
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Network::Mlp(m) => vec![m.input_dim()],
            Network::ConvGap(m) => m.input_shape().to_vec(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Network::Mlp(m) => m.num_classes(),
            Network::ConvGap(m) => m.num_classes(),
        }
    }

    pub fn forward_sample(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Network::Mlp(m) => m.forward_sample(x),
            Network::ConvGap(m) => m.forward_sample(x),
        }
    }

    pub fn accumulate_grads(&self, x: &[f64], dlogits: &[f64], grads: &mut [Tensor]) {
        match self {
            Network::Mlp(m) => m.accumulate_grads(x, dlogits, grads),
            Network::ConvGap(m) => m.accumulate_grads(x, dlogits, grads),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Network::Mlp(m) => m.params(),
            Network::ConvGap(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Network::Mlp(m) => m.params_mut(),
            Network::ConvGap(m) => m.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Network::Mlp(m) => m.param_names(),
            Network::ConvGap(m) => m.param_names(),
        }
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let want = self.input_shape();
        if batch.ndim() != want.len() + 1 || batch.shape()[1..] != want[..] {
            return Err(Error::contract(format!(
                "batch shape {:?} does not match model input {want:?}",
                batch.shape()
            )));
        }
        Ok(batch.shape()[0])
    }

    /// Logits `B × M` for a batch `B × input_shape`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| self.forward_sample(batch.row(i)))
            .collect();
        Tensor::new(vec![n, self.num_classes()], rows.concat())
    }

    /// Summed loss and summed gradients over the selected rows.
    fn chunk_grads(
        &self,
        batch: &Tensor,
        targets: &Targets,
        rows: &[usize],
        spec: &LossSpec,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for &i in rows {
            let x = batch.row(i);
            let head = |logits: &[f64]| loss_and_logit_grad(logits, targets.get(i), spec);
            loss += match self {
                Network::Mlp(m) => m.backprop(x, &mut grads, head)?,
                Network::ConvGap(m) => m.backprop(x, &mut grads, head)?,
            };
        }
        Ok((loss, grads))
    }

    /// Mean loss over `rows` and its gradient for every parameter tensor.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor,
        targets: &Targets,
        rows: &[usize],
        spec: &LossSpec,
    ) -> Result<(f64, Vec<Tensor>)> {
        let n = self.check_batch(batch)?;
        if targets.len() != n {
            return Err(Error::contract(format!(
                "{} targets for a batch of {n}",
                targets.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::contract("gradient over an empty batch"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(Error::contract(format!("row {bad} outside batch of {n}")));
        }
        let partials = rows
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| self.chunk_grads(batch, targets, chunk, spec))
            .collect::<Result<Vec<_>>>()?;
        let mut partials = partials.into_iter();
        let (mut loss, mut grads) = partials.next().expect("rows non-empty");
        for (l, g) in partials {
            loss += l;
            for (acc, part) in grads.iter_mut().zip(&g) {
                acc.axpy(1.0, part);
            }
        }
        let scale = 1.0 / rows.len() as f64;
        grads.iter_mut().for_each(|g| g.scale(scale));
        Ok((loss * scale, grads))
    }
}

/// A network together with the output layer it is trained and read with.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub network: Network,
    pub head: LossSpec,
}

impl ClassifierModel {
    pub fn new(network: Network, head: LossSpec) -> Result<Self> {
        if let Some(m) = head.classes() {
            if m != network.num_classes() {
                return Err(Error::contract(format!(
                    "head covers {m} classes, network emits {}",
                    network.num_classes()
                )));
            }
        }
        Ok(Self { network, head })
    }

    pub fn num_classes(&self) -> usize {
        self.network.num_classes()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.network.forward(batch)
    }

    /// Gradients of the mean per-example loss over the whole batch.
    pub fn backward(&self, batch: &Tensor, targets: &Targets) -> Result<(f64, Vec<Tensor>)> {
        let rows: Vec<usize> = (0..batch.shape()[0]).collect();
        self.network.loss_and_grads(batch, targets, &rows, &self.head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::gradient_check;
    use crate::losses_mi::Prior;

    fn random_batch(rng: &mut RngStream, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.normal())
    }

    #[test]
    fn single_linear_layer_grad_is_softmax_minus_onehot() {
        let mut rng = RngStream::new(1, 0);
        let net = Network::Mlp(MlpModel::new(&[3, 4], &mut rng).unwrap());
        let x = random_batch(&mut rng, &[1, 3]);
        let targets = Targets::Classes(vec![2]);
        let (_, grads) = net
            .loss_and_grads(&x, &targets, &[0], &LossSpec::SoftmaxCe)
            .unwrap();
        let logits = net.forward_sample(x.row(0));
        let mut delta = crate::core_math::softmax(&logits).unwrap();
        delta[2] -= 1.0;
        assert_eq!(grads[1].data(), &delta[..]);
        for o in 0..4 {
            for i in 0..3 {
                let want = delta[o] * x.data()[i];
                assert!((grads[0].get(&[o, i]) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mlp_gradient_check() {
        let mut rng = RngStream::new(2, 0);
        let net = Network::Mlp(MlpModel::new(&[4, 6, 6, 6, 3], &mut rng).unwrap());
        let x = random_batch(&mut rng, &[8, 4]);
        let targets = Targets::Classes((0..8).map(|i| i % 3).collect());
        let rows: Vec<usize> = (0..8).collect();
        let spec = LossSpec::SoftmaxCe;
        let (_, grads) = net.loss_and_grads(&x, &targets, &rows, &spec).unwrap();
        for p in 0..grads.len() {
            let point = net.params()[p].clone();
            let f = |t: &Tensor| {
                let mut probe = net.clone();
                *probe.params_mut()[p] = t.clone();
                probe.loss_and_grads(&x, &targets, &rows, &spec).unwrap().0
            };
            let err = gradient_check(f, &point, &grads[p]).unwrap();
            assert!(err < 1e-5, "param {p}: {err}");
        }
    }

    #[test]
    fn uniform_pc_softmax_gradients_match_softmax() {
        let mut rng = RngStream::new(3, 0);
        let net = Network::Mlp(MlpModel::new(&[2, 5, 4], &mut rng).unwrap());
        let x = random_batch(&mut rng, &[6, 2]);
        let targets = Targets::Classes(vec![0, 1, 2, 3, 0, 1]);
        let rows: Vec<usize> = (0..6).collect();
        let (la, ga) = net
            .loss_and_grads(&x, &targets, &rows, &LossSpec::SoftmaxCe)
            .unwrap();
        let pc = LossSpec::PcSoftmaxCe {
            prior: Prior::uniform(4),
        };
        let (lb, gb) = net.loss_and_grads(&x, &targets, &rows, &pc).unwrap();
        assert!((la - lb - 4f64.ln()).abs() < 1e-12);
        assert_eq!(ga, gb);
    }

    #[test]
    fn invalid_label_is_contract_error() {
        let mut rng = RngStream::new(4, 0);
        let net = Network::Mlp(MlpModel::new(&[2, 3], &mut rng).unwrap());
        let x = random_batch(&mut rng, &[1, 2]);
        let targets = Targets::Classes(vec![3]);
        assert!(matches!(
            net.loss_and_grads(&x, &targets, &[0], &LossSpec::SoftmaxCe),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn forward_rejects_bad_shape() {
        let net = Network::Mlp(MlpModel::zeros(&[3, 2]).unwrap());
        assert!(net.forward(&Tensor::zeros(&[2, 4])).is_err());
        assert!(net.forward(&Tensor::zeros(&[2, 3])).is_ok());
    }

    #[test]
    fn conv_gap_logits_are_gap_weighted_sums() {
        let mut rng = RngStream::new(5, 0);
        let arch = ConvGapArch::default_for(12, 14, 4);
        let model = ConvGapModel::new(arch, &mut rng).unwrap();
        let x: Vec<f64> = (0..12 * 14).map(|_| rng.next_f64()).collect();
        let (logits, g) = model.forward_with_features(&x);
        let [k, h, w] = model.feature_shape();
        for (y, &logit) in logits.iter().enumerate() {
            let mut want = 0.0;
            for c in 0..k {
                let mean = g.data()[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
                want += model.head().get(&[y, c]) * mean;
            }
            assert!((logit - want).abs() < 1e-12);
        }
    }
}
