use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    build_id, CamArgs, CliError, CliResult, EstimateMiArgs, EvaluateArgs, GenSynthArgs, LocateArgs,
    MakeMmnistArgs, TrainArgs,
};
use crate::core_math::{RngStream, Tensor};
use crate::error::Error;
use crate::infocam::{
    class_map, evaluate_localization, upsample_bilinear, write_pgm, ArgminScope, MapMode,
    DEFAULT_THRESHOLD_RATIO,
};
use crate::losses_mi::{
    classification_report, cross_entropy_loss, estimate_mi, predict, LossSpec, Prediction, Prior,
    Target, Targets,
};
use crate::models::{
    load_model, save_model, train as fit, AdamConfig, Architecture, ClassifierModel, ConvGapArch, MlpModel,
    Network, TrainConfig, DEFAULT_HIDDEN,
};
use crate::synth::{LabeledDataset, MixtureSpec, OracleReport, BALANCED_PER_CLASS, TABLE_MEANS};
use crate::vision_data::{
    is_mmnist_dir, label_frequencies, load_mmnist, make_double_digit, read_idx, save_mmnist,
    synth_pool, training_tensors, DigitPool, LocalizationSample, MmnistManifest,
};

pub const REPORT_FORMAT_VERSION: &str = "miest-report/1";

const DEFAULT_ORACLE_SAMPLES: usize = 1_000_000;
const DEFAULT_HIDDEN_LAYERS: usize = 3;
const SYNTH_EPOCHS: usize = 30;
const SYNTH_BATCH: usize = 128;
const DIGIT_EPOCHS: usize = 10;
const DIGIT_BATCH: usize = 16;
const DIGIT_LR: f64 = 3e-3;
const DIGIT_CLASSES: usize = 10;
const DEFAULT_POOL_PER_CLASS: usize = 100;
const DEFAULT_REGION: usize = 1;
/// Stream of the train/validation permutation of a double-digit dataset.
const DIGIT_SPLIT_STREAM: u64 = 2;
/// Keeps the glyph pool's streams apart from the canvas streams of the same seed.
const POOL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

const ORACLE_FILE: &str = "oracle.json";

/// Common header of every JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: String,
    pub build_id: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(body: T) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION.into(),
            build_id: build_id().into(),
            body,
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("{flag} is required")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e).into())
}

/// Writes to `out`, or prints when no path was given.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            print!("{}", to_json(value)?);
            Ok(())
        }
    }
}

fn check_dataset_dir(dir: &Path) -> CliResult<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::Dataset(format!("no dataset directory at {}", dir.display())).into())
    }
}

fn read_oracle(dir: &Path) -> CliResult<OracleReport> {
    let path = dir.join(ORACLE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitName {
    Train,
    Val,
    Test,
    All,
}

impl SplitName {
    fn parse(name: Option<&str>) -> CliResult<Self> {
        match name.unwrap_or("test") {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            other => Err(CliError::usage(format!(
                "unknown split {other:?} (train, val, test, all)"
            ))),
        }
    }

    fn file(self) -> &'static str {
        match self {
            SplitName::Train => "train.csv",
            SplitName::Val => "val.csv",
            SplitName::Test => "test.csv",
            SplitName::All => "data.csv",
        }
    }
}

/// A `gen-synth` directory: its oracle and one CSV split.
fn read_synth(dir: &Path, split: SplitName) -> CliResult<(OracleReport, LabeledDataset)> {
    check_dataset_dir(dir)?;
    let oracle = read_oracle(dir)?;
    let data = LabeledDataset::read_csv(&dir.join(split.file()), oracle.classes)?;
    if data.dim() != oracle.dim {
        return Err(Error::Dataset(format!(
            "{} has {} columns but the oracle describes D = {}",
            split.file(),
            data.dim(),
            oracle.dim
        ))
        .into());
    }
    Ok((oracle, data))
}

fn check_model_fits(model: &ClassifierModel, input: &[usize], classes: usize) -> CliResult<()> {
    if model.num_classes() != classes {
        return Err(Error::Contract(format!(
            "model has M = {} classes, dataset has M = {classes}",
            model.num_classes()
        ))
        .into());
    }
    if model.network.input_shape() != input {
        return Err(Error::Contract(format!(
            "model expects inputs of shape {:?}, dataset provides {input:?}",
            model.network.input_shape()
        ))
        .into());
    }
    Ok(())
}

/// Prior under which the logits are read as PMI: the head's own prior for
/// prior-corrected softmax, uniform for plain softmax.
fn reading_prior(model: &ClassifierModel) -> Prior {
    match &model.head {
        LossSpec::PcSoftmaxCe { prior } => prior.clone(),
        _ => Prior::uniform(model.num_classes()),
    }
}

fn is_correct(prediction: &Prediction, target: Target<'_>) -> bool {
    match (prediction, target) {
        (Prediction::Class(c), Target::Class(y)) => *c == y,
        (Prediction::Labels(on), Target::Labels(labels)) => on
            .iter()
            .enumerate()
            .all(|(m, &flag)| flag == labels.contains(&m)),
        _ => false,
    }
}

/// Mean loss and accuracy (exact label-set match for multi-label heads).
fn loss_and_accuracy(model: &ClassifierModel, inputs: &Tensor, targets: &Targets) -> crate::Result<(f64, f64)> {
    let logits = model.forward(inputs)?;
    let n = targets.len();
    let (mut loss, mut correct) = (0.0, 0usize);
    for i in 0..n {
        let row = logits.row(i);
        loss += cross_entropy_loss(row, targets.get(i), &model.head)?;
        correct += is_correct(&predict(row, &model.head)?, targets.get(i)) as usize;
    }
    Ok((loss / n as f64, correct as f64 / n as f64))
}

pub(super) fn gen_synth(a: GenSynthArgs) -> CliResult<()> {
    let dim = require(a.dim, "--dim")?;
    if dim == 0 {
        return Err(CliError::usage("--dim must be at least 1"));
    }
    let seed = require(a.seed, "--seed")?;
    let classes = TABLE_MEANS.len();
    let counts = match (a.balanced, a.counts) {
        (true, None) => vec![BALANCED_PER_CLASS; classes],
        (false, Some(c)) => {
            if c.len() != classes {
                return Err(CliError::usage(format!(
                    "--counts needs {classes} entries, got {}",
                    c.len()
                )));
            }
            if c.contains(&0) {
                return Err(CliError::usage("--counts entries must be positive"));
            }
            c
        }
        (true, Some(_)) => return Err(CliError::usage("--balanced and --counts are exclusive")),
        (false, None) => return Err(CliError::usage("one of --balanced or --counts is required")),
    };
    let oracle_samples = a.oracle_samples.unwrap_or(DEFAULT_ORACLE_SAMPLES);
    if oracle_samples < 2 {
        return Err(CliError::usage("--oracle-samples must be at least 2"));
    }
    let out = a.out.unwrap_or_else(|| PathBuf::from("."));
    let prior = Prior::from_counts(&counts)?;
    let spec = MixtureSpec::benchmark(dim, prior)?;
    let data = spec.sample(&counts, seed)?;
    let split = data.split(seed)?;
    create_dir(&out)?;
    data.write_csv(&out.join(SplitName::All.file()))?;
    split.train.write_csv(&out.join(SplitName::Train.file()))?;
    split.val.write_csv(&out.join(SplitName::Val.file()))?;
    split.test.write_csv(&out.join(SplitName::Test.file()))?;
    let oracle = spec.oracle_report(oracle_samples, seed)?;
    write_json(&out.join(ORACLE_FILE), &Envelope::new(&oracle))?;
    let prior: Vec<String> = oracle.prior.iter().map(|p| format!("{p:.4}")).collect();
    println!(
        "{} rows, D = {dim}, prior [{}], mc_mi = {:.4} ± {:.4}",
        data.len(),
        prior.join(", "),
        oracle.mc_mi,
        oracle.std_error
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct LogRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    val_accuracy: f64,
    /// Empty for multi-label heads.
    val_mi_estimate: Option<f64>,
}

struct Prepared {
    model: ClassifierModel,
    inputs: Tensor,
    targets: Targets,
    val_inputs: Tensor,
    val_targets: Targets,
    /// Validation set for the MI read-out, when the head supports one.
    val_mi: Option<LabeledDataset>,
    cfg: TrainConfig,
}

fn parse_loss(name: &str) -> CliResult<&str> {
    match name {
        "softmax" | "pc-softmax" | "sigmoid" | "pc-sigmoid" => Ok(name),
        other => Err(CliError::usage(format!(
            "unknown loss {other:?} (softmax, pc-softmax, sigmoid, pc-sigmoid)"
        ))),
    }
}

fn train_config(a: &TrainArgs, seed: u64, epochs: usize, batch: usize, lr: f64) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::new(seed, a.epochs.unwrap_or(epochs));
    cfg.batch_size = a.batch_size.unwrap_or(batch);
    cfg.adam.lr = a.lr.unwrap_or(lr);
    if cfg.batch_size == 0 {
        return Err(CliError::usage("--batch-size must be positive"));
    }
    if !(cfg.adam.lr.is_finite() && cfg.adam.lr > 0.0) {
        return Err(CliError::usage("--lr must be a positive number"));
    }
    Ok(cfg)
}

fn prepare_synth(a: &TrainArgs, dir: &Path, seed: u64) -> CliResult<Prepared> {
    let loss = parse_loss(a.loss.as_deref().unwrap_or("softmax"))?;
    if matches!(loss, "sigmoid" | "pc-sigmoid") {
        return Err(CliError::usage(format!(
            "{loss} is a multi-label loss; synthetic data takes softmax or pc-softmax"
        )));
    }
    let hidden = a.hidden.unwrap_or(DEFAULT_HIDDEN);
    if hidden == 0 {
        return Err(CliError::usage("--hidden must be positive"));
    }
    let (_, train) = read_synth(dir, SplitName::Train)?;
    let (_, val) = read_synth(dir, SplitName::Val)?;
    let head = match loss {
        "pc-softmax" => LossSpec::PcSoftmaxCe {
            prior: train.empirical_prior()?,
        },
        _ => LossSpec::SoftmaxCe,
    };
    let mut dims = vec![train.dim()];
    dims.extend(std::iter::repeat_n(hidden, a.layers.unwrap_or(DEFAULT_HIDDEN_LAYERS)));
    dims.push(train.classes());
    MlpModel::validate_dims(&dims)?;
    let arch = Architecture::Mlp { layer_dims: dims };
    let net = Network::init(&arch, &mut RngStream::new(seed, 0))?;
    Ok(Prepared {
        model: ClassifierModel::new(net, head)?,
        inputs: train.inputs().clone(),
        targets: train.targets(),
        val_inputs: val.inputs().clone(),
        val_targets: val.targets(),
        val_mi: Some(val),
        cfg: train_config(a, seed, SYNTH_EPOCHS, SYNTH_BATCH, AdamConfig::default().lr)?,
    })
}

/// 85 / 15 train / validation partition of a seeded permutation.
fn split_digits(samples: Vec<LocalizationSample>, seed: u64) -> CliResult<(Vec<LocalizationSample>, Vec<LocalizationSample>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Dataset("need at least two canvases to train".into()).into());
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed, DIGIT_SPLIT_STREAM).shuffle(&mut order);
    let n_val = (n * 15 / 100).max(1);
    let mut slots: Vec<Option<LocalizationSample>> = samples.into_iter().map(Some).collect();
    let mut take = |rows: &[usize]| -> Vec<LocalizationSample> {
        rows.iter().map(|&i| slots[i].take().expect("permutation")).collect()
    };
    let train = take(&order[..n - n_val]);
    let val = take(&order[n - n_val..]);
    Ok((train, val))
}

fn prepare_digits(a: &TrainArgs, dir: &Path, seed: u64) -> CliResult<Prepared> {
    let loss = parse_loss(a.loss.as_deref().unwrap_or("pc-sigmoid"))?;
    if matches!(loss, "softmax" | "pc-softmax") {
        return Err(CliError::usage(format!(
            "{loss} is a single-label loss; double-digit data takes sigmoid or pc-sigmoid"
        )));
    }
    if a.hidden.is_some() || a.layers.is_some() {
        return Err(CliError::usage("--hidden and --layers apply to synthetic data only"));
    }
    let (manifest, samples) = load_mmnist(dir)?;
    let (train, val) = split_digits(samples, seed)?;
    let head = match loss {
        "pc-sigmoid" => LossSpec::pc_sigmoid(label_frequencies(&train, DIGIT_CLASSES))?,
        _ => LossSpec::SigmoidMultilabel,
    };
    let arch = ConvGapArch::default_for(manifest.height, manifest.width, DIGIT_CLASSES);
    let net = Network::init(&Architecture::ConvGap(arch), &mut RngStream::new(seed, 0))?;
    let (inputs, targets) = training_tensors(&train)?;
    let (val_inputs, val_targets) = training_tensors(&val)?;
    Ok(Prepared {
        model: ClassifierModel::new(net, head)?,
        inputs,
        targets,
        val_inputs,
        val_targets,
        val_mi: None,
        cfg: train_config(a, seed, DIGIT_EPOCHS, DIGIT_BATCH, DIGIT_LR)?,
    })
}

pub(super) fn train(a: TrainArgs) -> CliResult<()> {
    let dir = require(a.data.clone(), "--data")?;
    let seed = require(a.seed, "--seed")?;
    let model_out = require(a.model_out.clone(), "--model-out")?;
    check_dataset_dir(&dir)?;
    let mut p = if is_mmnist_dir(&dir) {
        prepare_digits(&a, &dir, seed)?
    } else {
        prepare_synth(&a, &dir, seed)?
    };
    let mut rows = Vec::with_capacity(p.cfg.epochs);
    let (val_inputs, val_targets, val_mi) = (&p.val_inputs, &p.val_targets, &p.val_mi);
    fit(&mut p.model, &p.inputs, &p.targets, &p.cfg, |summary, model| {
        let (val_loss, val_accuracy) = loss_and_accuracy(model, val_inputs, val_targets)?;
        let val_mi_estimate = match val_mi {
            Some(val) => Some(estimate_mi(model, val, &reading_prior(model))?.mi_estimate),
            None => None,
        };
        let mi = val_mi_estimate.map_or(String::new(), |v| format!(" val_mi {v:.4}"));
        println!(
            "epoch {} train_loss {:.5} val_loss {val_loss:.5} val_accuracy {val_accuracy:.4}{mi}",
            summary.epoch, summary.train_loss
        );
        rows.push(LogRow {
            epoch: summary.epoch,
            train_loss: summary.train_loss,
            val_loss,
            val_accuracy,
            val_mi_estimate,
        });
        Ok(())
    })?;
    if let Some(parent) = model_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&p.model, &model_out)?;
    if let Some(log) = &a.log {
        if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        let mut w = csv::Writer::from_path(log).map_err(Error::from)?;
        for row in &rows {
            w.serialize(row).map_err(Error::from)?;
        }
        w.flush().map_err(|e| Error::io(log, e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MiReport {
    seed: u64,
    loss: &'static str,
    split: SplitName,
    n_samples: usize,
    #[serde(rename = "M")]
    classes: usize,
    mi_estimate: f64,
    /// Standard error of the mean PMI over the evaluated rows.
    estimate_std_error: f64,
    mc_oracle: f64,
    /// Standard error of the Monte-Carlo oracle.
    std_error: f64,
    accuracy: f64,
    per_class_accuracy: f64,
    per_class_recall: Vec<Option<f64>>,
}

fn std_error_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

pub(super) fn estimate_mi_cmd(a: EstimateMiArgs) -> CliResult<()> {
    let model_path = require(a.model, "--model")?;
    let dir = require(a.data, "--data")?;
    let split = SplitName::parse(a.split.as_deref())?;
    let (oracle, data) = read_synth(&dir, split)?;
    let model = load_model(&model_path)?;
    check_model_fits(&model, &[data.dim()], data.classes())?;
    let est = estimate_mi(&model, &data, &reading_prior(&model))?;
    let cls = classification_report(&model, &data)?;
    let report = MiReport {
        seed: oracle.seed,
        loss: model.head.name(),
        split,
        n_samples: data.len(),
        classes: data.classes(),
        mi_estimate: est.mi_estimate,
        estimate_std_error: std_error_of_mean(&est.per_sample_pmi),
        mc_oracle: oracle.mc_mi,
        std_error: oracle.std_error,
        accuracy: cls.accuracy,
        per_class_accuracy: cls.per_class_accuracy,
        per_class_recall: cls.per_class_recall,
    };
    emit(a.out.as_deref(), &Envelope::new(report))
}

#[derive(Debug, Serialize)]
struct SynthEvaluation {
    seed: u64,
    loss: &'static str,
    split: SplitName,
    n_samples: usize,
    mean_loss: f64,
    accuracy: f64,
    per_class_accuracy: f64,
    per_class_recall: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct DigitEvaluation {
    seed: u64,
    loss: &'static str,
    n_samples: usize,
    mean_loss: f64,
    /// Canvases whose predicted label set equals the true one.
    exact_match: f64,
    /// Correct per-label presence decisions.
    label_accuracy: f64,
}

pub(super) fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let model_path = require(a.model, "--model")?;
    let dir = require(a.data, "--data")?;
    check_dataset_dir(&dir)?;
    let model = load_model(&model_path)?;
    if is_mmnist_dir(&dir) {
        if a.split.is_some() {
            return Err(CliError::usage("--split applies to synthetic data only"));
        }
        let (manifest, samples) = load_mmnist(&dir)?;
        let (inputs, targets) = training_tensors(&samples)?;
        check_model_fits(&model, &inputs.shape()[1..], DIGIT_CLASSES)?;
        let (mean_loss, exact_match) = loss_and_accuracy(&model, &inputs, &targets)?;
        let logits = model.forward(&inputs)?;
        let mut right = 0usize;
        for (i, s) in samples.iter().enumerate() {
            if let Prediction::Labels(on) = predict(logits.row(i), &model.head)? {
                right += on
                    .iter()
                    .enumerate()
                    .filter(|(m, &flag)| flag == s.labels.contains(m))
                    .count();
            }
        }
        let report = DigitEvaluation {
            seed: manifest.seed,
            loss: model.head.name(),
            n_samples: samples.len(),
            mean_loss,
            exact_match,
            label_accuracy: right as f64 / (samples.len() * DIGIT_CLASSES) as f64,
        };
        return emit(a.out.as_deref(), &Envelope::new(report));
    }
    let split = SplitName::parse(a.split.as_deref())?;
    let (oracle, data) = read_synth(&dir, split)?;
    check_model_fits(&model, &[data.dim()], data.classes())?;
    let (mean_loss, _) = loss_and_accuracy(&model, data.inputs(), &data.targets())?;
    let cls = classification_report(&model, &data)?;
    let report = SynthEvaluation {
        seed: oracle.seed,
        loss: model.head.name(),
        split,
        n_samples: data.len(),
        mean_loss,
        accuracy: cls.accuracy,
        per_class_accuracy: cls.per_class_accuracy,
        per_class_recall: cls.per_class_recall,
    };
    emit(a.out.as_deref(), &Envelope::new(report))
}

pub(super) fn make_mmnist(a: MakeMmnistArgs) -> CliResult<()> {
    let n = require(a.n, "--n")?;
    if n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let seed = require(a.seed, "--seed")?;
    let out = require(a.out, "--out")?;
    let (digits, source) = match (a.synthetic_digits, a.idx_images, a.idx_labels) {
        (true, None, None) => {
            let per_class = a.pool_per_class.unwrap_or(DEFAULT_POOL_PER_CLASS);
            if per_class == 0 {
                return Err(CliError::usage("--pool-per-class must be positive"));
            }
            (synth_pool(per_class, seed ^ POOL_SEED_SALT), "synthetic")
        }
        (false, Some(images), Some(labels)) => {
            if a.pool_per_class.is_some() {
                return Err(CliError::usage("--pool-per-class applies to synthetic digits only"));
            }
            (read_idx(&images, &labels)?, "idx")
        }
        _ => {
            return Err(CliError::usage(
                "give either --synthetic-digits or both --idx-images and --idx-labels",
            ))
        }
    };
    let pool = DigitPool::new(digits)?;
    let samples = make_double_digit(&pool, n, seed)?;
    let manifest = MmnistManifest::describe(&samples, seed, source);
    save_mmnist(&out, &samples, &manifest)?;
    println!("{n} canvases ({source} digits) in {}", out.display());
    Ok(())
}

fn parse_modes(names: Option<Vec<String>>) -> CliResult<Vec<MapMode>> {
    match names {
        None => Ok(MapMode::ALL.to_vec()),
        Some(names) if names.is_empty() => Err(CliError::usage("no map mode given")),
        Some(names) => names
            .iter()
            .map(|s| {
                MapMode::from_str(s).map_err(|_| {
                    CliError::usage(format!("unknown mode {s:?} (cam, infocam, infocam-plus)"))
                })
            })
            .collect(),
    }
}

fn parse_region(region: Option<usize>) -> CliResult<usize> {
    match region.unwrap_or(DEFAULT_REGION) {
        0 => Err(CliError::usage("--region must be at least 1")),
        r => Ok(r),
    }
}

fn load_digit_model(model: Option<PathBuf>, data: Option<PathBuf>) -> CliResult<(ClassifierModel, MmnistManifest, Vec<LocalizationSample>)> {
    let model_path = require(model, "--model")?;
    let dir = require(data, "--data")?;
    check_dataset_dir(&dir)?;
    let (manifest, samples) = load_mmnist(&dir)?;
    let model = load_model(&model_path)?;
    check_model_fits(&model, &[1, manifest.height, manifest.width], DIGIT_CLASSES)?;
    Ok((model, manifest, samples))
}

pub(super) fn cam(a: CamArgs) -> CliResult<()> {
    let modes = parse_modes(a.modes)?;
    let region = parse_region(a.region)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from("."));
    let (model, _, samples) = load_digit_model(a.model, a.data)?;
    let index = a.sample.unwrap_or(0);
    let sample = samples.get(index).ok_or_else(|| {
        CliError::usage(format!("--sample {index} out of range ({} canvases)", samples.len()))
    })?;
    let label = match a.label {
        Some(l) if l < DIGIT_CLASSES => l,
        Some(l) => return Err(CliError::usage(format!("--label {l} is not a digit class"))),
        None => *sample.labels.first().ok_or_else(|| {
            CliError::usage(format!("canvas {index} carries no digit; pass --label"))
        })?,
    };
    create_dir(&out)?;
    for mode in modes {
        let (_, map) = class_map(&model, sample.image.data(), label, mode, region, ArgminScope::PerWindow)?;
        let grid = if a.upsample {
            upsample_bilinear(&map.grid, sample.height(), sample.width())?
        } else {
            map.grid
        };
        let path = out.join(format!("sample{index}-label{label}-{mode}.pgm"));
        write_pgm(&grid, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct LocateReport {
    seed: u64,
    mode: MapMode,
    #[serde(rename = "R")]
    region: usize,
    threshold_ratio: f64,
    argmin_scope: ArgminScope,
    gt_loc: f64,
    top1_loc: f64,
    n_samples: usize,
}

pub(super) fn locate(a: LocateArgs) -> CliResult<()> {
    let modes = parse_modes(a.mode)?;
    let region = parse_region(a.region)?;
    let ratio = a.threshold_ratio.unwrap_or(DEFAULT_THRESHOLD_RATIO);
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(CliError::usage("--threshold-ratio must lie in (0, 1]"));
    }
    let scope = if a.global_argmin {
        ArgminScope::Global
    } else {
        ArgminScope::PerWindow
    };
    let (model, manifest, samples) = load_digit_model(a.model, a.data)?;
    for mode in modes {
        let m = evaluate_localization(&model, &samples, mode, region, ratio, scope)?;
        let report = Envelope::new(LocateReport {
            seed: manifest.seed,
            mode,
            region,
            threshold_ratio: ratio,
            argmin_scope: scope,
            gt_loc: m.gt_loc,
            top1_loc: m.top1_loc,
            n_samples: m.n_samples,
        });
        match &a.out {
            Some(dir) => {
                write_json(&dir.join(format!("locate-{mode}.json")), &report)?;
                println!("{mode}: gt_loc {:.4} top1_loc {:.4}", m.gt_loc, m.top1_loc);
            }
            None => print!("{}", to_json(&report)?),
        }
    }
    Ok(())
}
