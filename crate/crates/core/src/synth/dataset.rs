use std::path::Path;

use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::losses_mi::{Prior, Targets};

const SPLIT_STREAM: u64 = (1 << 32) + 2;

/// Inputs `N × D` with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.ndim() != 2 {
            return Err(Error::contract(format!(
                "dataset inputs must be N × D, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.shape()[0] != labels.len() {
            return Err(Error::contract(format!(
                "{} rows but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::contract(format!("label {y} >= class count {classes}")));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn targets(&self) -> Targets {
        Targets::Classes(self.labels.clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Raw class frequencies; fails if any class is absent.
    pub fn empirical_prior(&self) -> Result<Prior> {
        Prior::from_counts(&self.class_counts())
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("empty subset"));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(Tensor::new(vec![rows.len(), d], data)?, labels, self.classes)
    }

    /// 70 / 15 / 15 train / validation / test partition of a seeded permutation.
    pub fn split(&self, seed: u64) -> Result<Split> {
        let n = self.len();
        if n < 3 {
            return Err(Error::contract("need at least three rows to split"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        RngStream::new(seed, SPLIT_STREAM).shuffle(&mut order);
        let n_train = (n * 70 / 100).max(1);
        let n_val = (n * 15 / 100).max(1);
        Ok(Split {
            train: self.subset(&order[..n_train])?,
            val: self.subset(&order[n_train..n_train + n_val])?,
            test: self.subset(&order[n_train + n_val..])?,
        })
    }

    /// CSV with header `x0,...,x{D-1},label`; reals carry 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (i, &y) in self.labels.iter().enumerate() {
            record.clear();
            record.extend(self.inputs.row(i).iter().map(|v| format!("{v:.16e}")));
            record.push(y.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, classes: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let well_formed = dim >= 1
            && header.get(dim) == Some("label")
            && (0..dim).all(|j| header.get(j) == Some(format!("x{j}").as_str()));
        if !well_formed {
            return Err(Error::Dataset(format!(
                "{}: header must be x0,...,x{{D-1}},label",
                path.display()
            )));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| {
                Error::Dataset(format!("{}: row {}: bad {what}", path.display(), line + 1))
            };
            for j in 0..dim {
                let v: f64 = rec.get(j).ok_or_else(|| bad("arity"))?.parse().map_err(|_| bad("value"))?;
                data.push(v);
            }
            let y: usize = rec.get(dim).ok_or_else(|| bad("arity"))?.parse().map_err(|_| bad("label"))?;
            labels.push(y);
        }
        if labels.is_empty() {
            return Err(Error::Dataset(format!("{}: no rows", path.display())));
        }
        Self::new(Tensor::new(vec![labels.len(), dim], data)?, labels, classes)
    }
}
