//! Output layers read as mutual-information estimators.
//!
//! A classifier trained with softmax cross-entropy learns logits `n(x)_y`
//! whose softmax-normalised log-ratio is the pointwise mutual information
//! between input and label under a uniform label prior. The prior-corrected
//! softmax ([`pc_softmax`]) removes the uniform assumption: its log-output at
//! label `y` is `log P(y|x) / P(y)` at the optimum, so the dataset average of
//! [`pmi`] is an estimate of `I(X; Y)`.

use serde::{Deserialize, Serialize};

use crate::core_math::{argmax, logsumexp, softmax};
use crate::error::{Error, Result};
use crate::models::ClassifierModel;
use crate::synth::LabeledDataset;

/// Label distribution `P(y)`; strictly positive and normalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prior {
    probs: Vec<f64>,
}

impl Prior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("prior must have at least one class"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::contract(format!("prior entries must be > 0, got {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("prior sums to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0, "uniform prior over zero classes");
        Self {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    /// Raw class frequencies. A zero count is an error: the corrected softmax
    /// divides by nothing but needs `log P(y)` to be finite.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!(
                "class {class} has no training samples; its prior would be zero"
            )));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        let mut counts = vec![0usize; classes];
        for &y in labels {
            if y >= classes {
                return Err(Error::contract(format!("label {y} >= {classes}")));
            }
            counts[y] += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().all(|&p| p == u)
    }

    /// Shannon entropy in nats; the ceiling for `I(X; Y)`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| p * p.ln()).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for Prior {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Prior::new(v)
    }
}

impl From<Prior> for Vec<f64> {
    fn from(p: Prior) -> Self {
        p.probs
    }
}

/// Output layer plus loss. The prior-corrected variants carry their prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LossSpec {
    SoftmaxCe,
    PcSoftmaxCe { prior: Prior },
    SigmoidMultilabel,
    /// `label_priors[m]` is the fraction of training examples that carry label `m`.
    PcSigmoidMultilabel { label_priors: Vec<f64> },
}

impl LossSpec {
    pub fn pc_sigmoid(label_priors: Vec<f64>) -> Result<Self> {
        if let Some(p) = label_priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::contract(format!("per-label prior {p} outside (0, 1)")));
        }
        Ok(LossSpec::PcSigmoidMultilabel { label_priors })
    }

    pub fn is_multilabel(&self) -> bool {
        matches!(
            self,
            LossSpec::SigmoidMultilabel | LossSpec::PcSigmoidMultilabel { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::SoftmaxCe => "softmax",
            LossSpec::PcSoftmaxCe { .. } => "pc-softmax",
            LossSpec::SigmoidMultilabel => "sigmoid",
            LossSpec::PcSigmoidMultilabel { .. } => "pc-sigmoid",
        }
    }

    /// Class count the spec is bound to, if it carries one.
    pub fn classes(&self) -> Option<usize> {
        match self {
            LossSpec::PcSoftmaxCe { prior } => Some(prior.len()),
            LossSpec::PcSigmoidMultilabel { label_priors } => Some(label_priors.len()),
            _ => None,
        }
    }
}

/// Supervision for one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target<'a> {
    Class(usize),
    Labels(&'a [usize]),
}

/// Supervision for a whole dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    Classes(Vec<usize>),
    LabelSets(Vec<Vec<usize>>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::LabelSets(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Target<'_> {
        match self {
            Targets::Classes(v) => Target::Class(v[i]),
            Targets::LabelSets(v) => Target::Labels(&v[i]),
        }
    }
}

fn check_dims(logits: &[f64], prior: &Prior) -> Result<()> {
    if logits.len() != prior.len() {
        return Err(Error::contract(format!(
            "{} logits but prior over {} classes",
            logits.len(),
            prior.len()
        )));
    }
    Ok(())
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::contract(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// `log Σ_y P(y) exp(n_y)`, shifted by the largest logit.
pub fn pc_log_normalizer(logits: &[f64], prior: &Prior) -> Result<f64> {
    check_dims(logits, prior)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::contract("logits must be finite"));
    }
    let sum: f64 = logits
        .iter()
        .zip(prior.probs())
        .map(|(&n, &p)| p * (n - max).exp())
        .sum();
    Ok(max + sum.ln())
}

/// `P(y) exp(n_y) / Σ_y' P(y') exp(n_y')`: the gradient weights of the
/// corrected loss. A uniform prior takes the plain softmax path so that both
/// losses produce bit-identical gradients.
fn prior_weighted_softmax(logits: &[f64], prior: &Prior) -> Result<Vec<f64>> {
    check_dims(logits, prior)?;
    if prior.is_uniform() {
        return softmax(logits);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits
        .iter()
        .zip(prior.probs())
        .map(|(&n, &p)| p * (n - max).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Prior-corrected softmax `exp(n_y) / Σ_y' P(y') exp(n_y')`.
///
/// The outputs are density ratios: `Σ_y P(y) σ_p(y) = 1`, not `Σ_y σ_p(y) = 1`.
pub fn pc_softmax(logits: &[f64], prior: &Prior) -> Result<Vec<f64>> {
    let log_z = pc_log_normalizer(logits, prior)?;
    Ok(logits.iter().map(|&n| (n - log_z).exp()).collect())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_label_prior(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::contract(format!("label prior {p} outside (0, 1)")));
    }
    Ok(())
}

/// Two-class prior-corrected softmax with logits `(z, 0)` and prior `(p, 1-p)`,
/// read at the positive class: `exp(z) / (p exp(z) + 1 - p)`.
pub fn pc_sigmoid(logit: f64, p: f64) -> Result<f64> {
    check_label_prior(p)?;
    let log_z = (1.0 - p).ln() + softplus(logit + (p / (1.0 - p)).ln());
    Ok((logit - log_z).exp())
}

/// Cross-entropy of one example under `spec`.
pub fn cross_entropy_loss(logits: &[f64], target: Target<'_>, spec: &LossSpec) -> Result<f64> {
    loss_terms(logits, target, spec, false).map(|(loss, _)| loss)
}

/// Loss and its gradient with respect to the logits.
pub fn loss_and_logit_grad(
    logits: &[f64],
    target: Target<'_>,
    spec: &LossSpec,
) -> Result<(f64, Vec<f64>)> {
    loss_terms(logits, target, spec, true)
}

fn multilabel_mask(labels: &[usize], classes: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; classes];
    for &m in labels {
        check_label(m, classes)?;
        mask[m] = true;
    }
    Ok(mask)
}

fn loss_terms(
    logits: &[f64],
    target: Target<'_>,
    spec: &LossSpec,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let classes = logits.len();
    if let Some(m) = spec.classes() {
        if m != classes {
            return Err(Error::contract(format!(
                "loss spec expects {m} classes, model produced {classes}"
            )));
        }
    }
    match (spec, target) {
        (LossSpec::SoftmaxCe, Target::Class(y)) => {
            check_label(y, classes)?;
            let loss = logsumexp(logits)? - logits[y];
            let grad = if want_grad {
                let mut g = softmax(logits)?;
                g[y] -= 1.0;
                g
            } else {
                Vec::new()
            };
            Ok((loss, grad))
        }
        (LossSpec::PcSoftmaxCe { prior }, Target::Class(y)) => {
            check_label(y, classes)?;
            let loss = pc_log_normalizer(logits, prior)? - logits[y];
            let grad = if want_grad {
                let mut g = prior_weighted_softmax(logits, prior)?;
                g[y] -= 1.0;
                g
            } else {
                Vec::new()
            };
            Ok((loss, grad))
        }
        (LossSpec::SigmoidMultilabel, Target::Labels(labels)) => {
            let mask = multilabel_mask(labels, classes)?;
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(if want_grad { classes } else { 0 });
            for (&z, &on) in logits.iter().zip(&mask) {
                let t = if on { 1.0 } else { 0.0 };
                loss += softplus(z) - t * z;
                if want_grad {
                    grad.push(sigmoid(z) - t);
                }
            }
            Ok((loss, grad))
        }
        (LossSpec::PcSigmoidMultilabel { label_priors }, Target::Labels(labels)) => {
            let mask = multilabel_mask(labels, classes)?;
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(if want_grad { classes } else { 0 });
            for ((&z, &on), &p) in logits.iter().zip(&mask).zip(label_priors) {
                check_label_prior(p)?;
                let t = if on { 1.0 } else { 0.0 };
                let shift = (p / (1.0 - p)).ln();
                loss += softplus(z + shift) + (1.0 - p).ln() - t * z;
                if want_grad {
                    grad.push(sigmoid(z + shift) - t);
                }
            }
            Ok((loss, grad))
        }
        (spec, target) => Err(Error::contract(format!(
            "target {target:?} does not fit loss {}",
            spec.name()
        ))),
    }
}

/// Pointwise mutual information read from logits:
/// `n_y - log Σ_y' P(y') exp(n_y')`, which equals `log σ_p(n)_y`.
pub fn pmi(logits: &[f64], label: usize, prior: &Prior) -> Result<f64> {
    check_dims(logits, prior)?;
    check_label(label, logits.len())?;
    Ok(logits[label] - pc_log_normalizer(logits, prior)?)
}

/// Uniform-prior PMI `n_y - logsumexp(n) + log M`.
pub fn pmi_uniform(logits: &[f64], label: usize) -> Result<f64> {
    check_label(label, logits.len())?;
    Ok(logits[label] - logsumexp(logits)? + (logits.len() as f64).ln())
}

/// PMI at the true label minus the mean PMI of the other labels. The
/// normalisers cancel, leaving `n_y* - mean_{y' != y*} n_y'`.
pub fn diff_pmi(logits: &[f64], label: usize) -> Result<f64> {
    let classes = logits.len();
    if classes < 2 {
        return Err(Error::contract("diff_pmi needs at least two classes"));
    }
    check_label(label, classes)?;
    let others: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &n)| n)
        .sum();
    Ok(logits[label] - others / (classes - 1) as f64)
}

/// Label decision for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Labels(Vec<bool>),
}

/// Single-label heads pick the largest score; `σ_p` is a monotone map of the
/// logits, so both softmax variants take `argmax_y n_y`. Sigmoid keeps labels
/// with probability ≥ 0.5, PC-sigmoid those with density ratio ≥ 1.
pub fn predict(logits: &[f64], spec: &LossSpec) -> Result<Prediction> {
    match spec {
        LossSpec::SoftmaxCe => argmax(logits)
            .map(Prediction::Class)
            .ok_or_else(|| Error::contract("empty logits")),
        LossSpec::PcSoftmaxCe { prior } => {
            let scores = pc_softmax(logits, prior)?;
            argmax(&scores)
                .map(Prediction::Class)
                .ok_or_else(|| Error::contract("empty logits"))
        }
        LossSpec::SigmoidMultilabel => Ok(Prediction::Labels(
            logits.iter().map(|&z| sigmoid(z) >= 0.5).collect(),
        )),
        LossSpec::PcSigmoidMultilabel { label_priors } => {
            if label_priors.len() != logits.len() {
                return Err(Error::contract("label prior count differs from logits"));
            }
            let labels = logits
                .iter()
                .zip(label_priors)
                .map(|(&z, &p)| pc_sigmoid(z, p).map(|s| s >= 1.0))
                .collect::<Result<Vec<_>>>()?;
            Ok(Prediction::Labels(labels))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    pub mi_estimate: f64,
    pub per_sample_pmi: Vec<f64>,
}

/// Dataset mean of the PMI read from the model's logits.
pub fn estimate_mi(
    model: &ClassifierModel,
    dataset: &LabeledDataset,
    prior: &Prior,
) -> Result<MiEstimate> {
    if dataset.is_empty() {
        return Err(Error::contract("estimate_mi on an empty dataset"));
    }
    if model.num_classes() != prior.len() {
        return Err(Error::contract(format!(
            "model has {} classes, prior has {}",
            model.num_classes(),
            prior.len()
        )));
    }
    let logits = model.forward(dataset.inputs())?;
    let per_sample_pmi = dataset
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| pmi(logits.row(i), y, prior))
        .collect::<Result<Vec<_>>>()?;
    // Fixed left-to-right order keeps the mean reproducible.
    let mi_estimate = per_sample_pmi.iter().sum::<f64>() / per_sample_pmi.len() as f64;
    Ok(MiEstimate {
        mi_estimate,
        per_sample_pmi,
    })
}

/// Overall accuracy and per-class recall of a single-label classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Recall of every class; `None` for classes absent from the dataset.
    pub per_class_recall: Vec<Option<f64>>,
    /// Mean recall over the classes that occur.
    pub per_class_accuracy: f64,
}

pub fn classification_report(
    model: &ClassifierModel,
    dataset: &LabeledDataset,
) -> Result<ClassificationReport> {
    if model.head.is_multilabel() {
        return Err(Error::contract("classification report needs a single-label head"));
    }
    if dataset.is_empty() {
        return Err(Error::contract("classification report on an empty dataset"));
    }
    let m = model.num_classes();
    if dataset.classes() != m {
        return Err(Error::contract(format!(
            "model has {m} classes, dataset has {}",
            dataset.classes()
        )));
    }
    let logits = model.forward(dataset.inputs())?;
    let mut hits = vec![0usize; m];
    let mut totals = vec![0usize; m];
    for (i, &y) in dataset.labels().iter().enumerate() {
        totals[y] += 1;
        if predict(logits.row(i), &model.head)? == Prediction::Class(y) {
            hits[y] += 1;
        }
    }
    let per_class_recall: Vec<Option<f64>> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
    Ok(ClassificationReport {
        accuracy: hits.iter().sum::<usize>() as f64 / dataset.len() as f64,
        per_class_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        per_class_recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::RngStream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::new(vec![0.5, 0.5]).is_ok());
        assert!(Prior::new(vec![0.5, 0.6]).is_err());
        assert!(Prior::new(vec![1.0, 0.0]).is_err());
        assert!(Prior::from_counts(&[3, 0, 1]).is_err());
        let p = Prior::from_counts(&[6000, 12000, 18000, 24000, 30000]).unwrap();
        let want = [0.0667, 0.1333, 0.2, 0.2667, 0.3333];
        for (a, b) in p.probs().iter().zip(want) {
            assert!(close(*a, b, 1e-4));
        }
    }

    #[test]
    fn pc_softmax_examples() {
        let prior = Prior::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(pc_softmax(&[0.0, 0.0], &prior).unwrap(), vec![1.0, 1.0]);

        let logits = [0.3, -1.2, 2.5, 0.0, 4.1];
        let pc = pc_softmax(&logits, &Prior::uniform(5)).unwrap();
        let sm = softmax(&logits).unwrap();
        for (a, b) in pc.iter().zip(sm) {
            assert!(close(*a, 5.0 * b, 1e-12));
        }

        let prior = Prior::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = pc_softmax(&[1.0, 2.0, 3.0], &prior).unwrap();
        // exp(n_y) / (0.2e + 0.3e^2 + 0.5e^3), 50-digit reference
        let want = [0.212_313_657_170_255_16, 0.577_128_356_219_588_1, 1.568_797_523_400_145];
        for (a, b) in out.iter().zip(want) {
            assert!(close(*a, b, 1e-14), "{a} vs {b}");
        }
        let weighted: f64 = out.iter().zip(prior.probs()).map(|(s, p)| s * p).sum();
        assert!(close(weighted, 1.0, 1e-12));
        assert!(pc_softmax(&[1.0], &prior).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let equal = [0.7; 5];
        let ce = cross_entropy_loss(&equal, Target::Class(2), &LossSpec::SoftmaxCe).unwrap();
        assert!(close(ce, 5f64.ln(), 1e-14));

        let prior = Prior::new(vec![0.07, 0.13, 0.20, 0.27, 0.33]).unwrap();
        let pc = LossSpec::PcSoftmaxCe { prior };
        let loss = cross_entropy_loss(&equal, Target::Class(0), &pc).unwrap();
        assert!(close(loss, 0.0, 1e-14));

        let logits = [1.5, -0.25, 3.0, 0.1, -2.0];
        let uni = LossSpec::PcSoftmaxCe {
            prior: Prior::uniform(5),
        };
        let a = cross_entropy_loss(&logits, Target::Class(3), &uni).unwrap();
        let b = cross_entropy_loss(&logits, Target::Class(3), &LossSpec::SoftmaxCe).unwrap();
        assert!(close(a, b - 5f64.ln(), 1e-13));

        assert!(matches!(
            cross_entropy_loss(&logits, Target::Class(5), &LossSpec::SoftmaxCe),
            Err(Error::Contract(_))
        ));
        assert!(cross_entropy_loss(&logits, Target::Labels(&[0]), &LossSpec::SoftmaxCe).is_err());
    }

    #[test]
    fn pc_sigmoid_examples() {
        assert!(close(pc_sigmoid(0.0, 0.5).unwrap(), 1.0, 1e-15));
        for p in [0.01, 0.3, 0.9] {
            assert!(close(pc_sigmoid(0.0, p).unwrap(), 1.0, 1e-14));
        }
        assert!(close(pc_sigmoid(3f64.ln(), 0.25).unwrap(), 2.0, 1e-14));
        for z in [-3.0, 0.4, 7.0] {
            assert!(close(pc_sigmoid(z, 0.5).unwrap(), 2.0 * sigmoid(z), 1e-14));
        }
        assert!(pc_sigmoid(0.0, 0.0).is_err());
        assert!(pc_sigmoid(0.0, 1.0).is_err());
    }

    #[test]
    fn sigmoid_losses_differ_by_constant_at_half() {
        let logits = [0.3, -2.0, 1.1];
        let labels = [0usize, 2];
        let (a, ga) =
            loss_and_logit_grad(&logits, Target::Labels(&labels), &LossSpec::SigmoidMultilabel)
                .unwrap();
        let pc = LossSpec::pc_sigmoid(vec![0.5; 3]).unwrap();
        let (b, gb) = loss_and_logit_grad(&logits, Target::Labels(&labels), &pc).unwrap();
        assert!(close(a - b, 3.0 * 2f64.ln(), 1e-13));
        assert_eq!(ga, gb);
    }

    #[test]
    fn pmi_examples() {
        let uni = Prior::uniform(5);
        assert!(close(pmi(&[0.3; 5], 4, &uni).unwrap(), 0.0, 1e-15));
        let dominant = [200.0, 0.0, 0.0, 0.0, 0.0];
        assert!(close(pmi(&dominant, 0, &uni).unwrap(), 5f64.ln(), 1e-12));
        let uni3 = Prior::uniform(3);
        let v = pmi(&[1.0, 2.0, 3.0], 2, &uni3).unwrap();
        assert!(close(v, 0.691_006_324_223_729_4, 1e-14), "{v}");
        assert!(close(pmi_uniform(&[1.0, 2.0, 3.0], 2).unwrap(), v, 1e-14));
    }

    #[test]
    fn diff_pmi_examples() {
        assert_eq!(diff_pmi(&[2.0, 2.0, 2.0], 1).unwrap(), 0.0);
        assert_eq!(diff_pmi(&[4.0, 1.0, 1.0], 0).unwrap(), 3.0);
        assert!(diff_pmi(&[1.0], 0).is_err());

        let mut rng = RngStream::new(5, 0);
        let prior = Prior::uniform(6);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| 3.0 * rng.normal()).collect();
            let y = rng.below(6) as usize;
            let others: f64 = (0..6)
                .filter(|&k| k != y)
                .map(|k| pmi(&logits, k, &prior).unwrap())
                .sum();
            let explicit = pmi(&logits, y, &prior).unwrap() - others / 5.0;
            assert!(close(diff_pmi(&logits, y).unwrap(), explicit, 1e-12));
        }
    }

    #[test]
    fn predictions() {
        let prior = Prior::new(vec![0.1, 0.9]).unwrap();
        let spec = LossSpec::PcSoftmaxCe { prior };
        assert_eq!(predict(&[1.0, 0.5], &spec).unwrap(), Prediction::Class(0));
        assert_eq!(
            predict(&[1.0, 1.0], &LossSpec::SoftmaxCe).unwrap(),
            Prediction::Class(0)
        );
        let pcs = LossSpec::pc_sigmoid(vec![0.2, 0.2]).unwrap();
        assert_eq!(
            predict(&[0.0, -0.1], &pcs).unwrap(),
            Prediction::Labels(vec![true, false])
        );
        assert_eq!(
            predict(&[0.0, -0.1], &LossSpec::SigmoidMultilabel).unwrap(),
            Prediction::Labels(vec![true, false])
        );
    }

    #[test]
    fn loss_spec_serde_round_trip() {
        let spec = LossSpec::PcSoftmaxCe {
            prior: Prior::new(vec![0.25, 0.75]).unwrap(),
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("pc_softmax_ce"));
        let back: LossSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<LossSpec>(
            r#"{"variant":"pc_softmax_ce","prior":[0.5,0.6]}"#
        )
        .is_err());
    }
}
