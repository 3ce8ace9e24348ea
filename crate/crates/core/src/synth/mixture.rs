use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::core_math::{logsumexp, RngStream, Tensor};
use crate::error::{Error, Result};
use crate::losses_mi::Prior;

/// Scalar component means; component `y` is centred at `TABLE_MEANS[y] · 1_D`.
pub const TABLE_MEANS: [f64; 5] = [0.0, 2.0, -2.0, 4.0, -4.0];
/// Per-class sample counts of the unbalanced benchmark.
pub const UNBALANCED_COUNTS: [usize; 5] = [6000, 12000, 18000, 24000, 30000];
/// Per-class sample count of the balanced benchmark.
pub const BALANCED_PER_CLASS: usize = 12000;

/// Stream used to shuffle sampled rows; classes use streams `0..M`.
const SHUFFLE_STREAM: u64 = 1 << 32;
const MC_STREAM: u64 = (1 << 32) + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    dim: usize,
    means: Vec<Vec<f64>>,
    prior: Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDensity {
    pub log_px: f64,
    pub log_px_given_y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Oracle summary written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub dim: usize,
    #[serde(rename = "M")]
    pub classes: usize,
    pub prior: Vec<f64>,
    pub mc_mi: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(dim: usize, means: Vec<Vec<f64>>, prior: Prior) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("mixture dimension must be ≥ 1"));
        }
        if means.len() != prior.len() {
            return Err(Error::contract(format!(
                "{} means but prior over {} classes",
                means.len(),
                prior.len()
            )));
        }
        if means.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::contract("every mean must be a finite vector of length dim"));
        }
        Ok(Self { dim, means, prior })
    }

    /// Means `c · 1_D` for each scalar `c`.
    pub fn from_scalar_means(dim: usize, scalars: &[f64], prior: Prior) -> Result<Self> {
        Self::new(dim, scalars.iter().map(|&c| vec![c; dim]).collect(), prior)
    }

    /// The five-component benchmark mixture.
    pub fn benchmark(dim: usize, prior: Prior) -> Result<Self> {
        Self::from_scalar_means(dim, &TABLE_MEANS, prior)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// A copy with every mean multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            means: self
                .means
                .iter()
                .map(|m| m.iter().map(|v| v * factor).collect())
                .collect(),
            prior: self.prior.clone(),
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<LogDensity> {
        if x.len() != self.dim {
            return Err(Error::contract(format!(
                "point has dimension {}, mixture has {}",
                x.len(),
                self.dim
            )));
        }
        let norm = -0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln();
        let log_px_given_y: Vec<f64> = self
            .means
            .iter()
            .map(|mu| {
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                norm - 0.5 * sq
            })
            .collect();
        let log_px = if self.classes() == 1 {
            log_px_given_y[0]
        } else {
            let joint: Vec<f64> = log_px_given_y
                .iter()
                .zip(self.prior.probs())
                .map(|(l, p)| l + p.ln())
                .collect();
            logsumexp(&joint)?
        };
        Ok(LogDensity {
            log_px,
            log_px_given_y,
        })
    }

    fn draw_point(&self, class: usize, rng: &mut RngStream, out: &mut Vec<f64>) {
        for &m in &self.means[class] {
            out.push(m + rng.normal());
        }
    }

    /// Exactly `counts[y]` rows from component `y`, shuffled.
    ///
    /// Each class draws from its own stream, so the rows of class `y` do not
    /// depend on the counts of other classes.
    pub fn sample(&self, counts: &[usize], seed: u64) -> Result<LabeledDataset> {
        if counts.len() != self.classes() {
            return Err(Error::contract(format!(
                "{} counts for {} classes",
                counts.len(),
                self.classes()
            )));
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::contract("at least one sample must be requested"));
        }
        let per_class: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .map(|(y, &n)| {
                let mut rng = RngStream::new(seed, y as u64);
                let mut rows = Vec::with_capacity(n * self.dim);
                for _ in 0..n {
                    self.draw_point(y, &mut rng, &mut rows);
                }
                rows
            })
            .collect();
        let mut index: Vec<(usize, usize)> = counts
            .iter()
            .enumerate()
            .flat_map(|(y, &n)| (0..n).map(move |i| (y, i)))
            .collect();
        RngStream::new(seed, SHUFFLE_STREAM).shuffle(&mut index);
        let mut data = Vec::with_capacity(total * self.dim);
        let mut labels = Vec::with_capacity(total);
        for (y, i) in index {
            data.extend_from_slice(&per_class[y][i * self.dim..(i + 1) * self.dim]);
            labels.push(y);
        }
        LabeledDataset::new(
            Tensor::new(vec![total, self.dim], data)?,
            labels,
            self.classes(),
        )
    }

    /// Monte-Carlo estimate of `I(X; Y)` as the mean of `log P(x|y) / P(x)`
    /// over draws from the joint, with its standard error.
    pub fn mc_mi(&self, n_samples: usize, seed: u64) -> Result<McEstimate> {
        if n_samples < 2 {
            return Err(Error::contract("mc_mi needs at least two samples"));
        }
        let mut rng = RngStream::new(seed, MC_STREAM);
        let mut x = Vec::with_capacity(self.dim);
        // Welford accumulation for mean and variance.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..n_samples {
            let y = rng.categorical(self.prior.probs());
            x.clear();
            self.draw_point(y, &mut rng, &mut x);
            let d = self.log_pdf(&x)?;
            let ratio = d.log_px_given_y[y] - d.log_px;
            let delta = ratio - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (ratio - mean);
        }
        let var = m2 / (n_samples - 1) as f64;
        Ok(McEstimate {
            estimate: mean,
            std_error: (var / n_samples as f64).sqrt(),
            n_samples,
        })
    }

    pub fn oracle_report(&self, n_samples: usize, seed: u64) -> Result<OracleReport> {
        let mc = self.mc_mi(n_samples, seed)?;
        Ok(OracleReport {
            dim: self.dim,
            classes: self.classes(),
            prior: self.prior.probs().to_vec(),
            mc_mi: mc.estimate,
            std_error: mc.std_error,
            n_samples,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_pdf_examples() {
        let one = MixtureSpec::new(1, vec![vec![0.0]], Prior::uniform(1)).unwrap();
        let d = one.log_pdf(&[0.0]).unwrap();
        assert!((d.log_px_given_y[0] + 0.918_938_533_204_672_7).abs() < 1e-15);
        assert_eq!(d.log_px, d.log_px_given_y[0]);

        let two = MixtureSpec::from_scalar_means(2, &[2.0, -1.0], Prior::uniform(2)).unwrap();
        let d = two.log_pdf(&[0.0, 0.0]).unwrap();
        assert!((d.log_px_given_y[0] + 5.837_877_066_409_345).abs() < 1e-14);
        assert!(two.log_pdf(&[0.0]).is_err());
    }

    #[test]
    fn sample_counts_and_prior() {
        let spec = MixtureSpec::benchmark(2, Prior::uniform(5)).unwrap();
        let ds = spec.sample(&UNBALANCED_COUNTS, 1).unwrap();
        assert_eq!(ds.len(), 90_000);
        assert_eq!(ds.class_counts(), UNBALANCED_COUNTS.to_vec());
        let prior = ds.empirical_prior().unwrap();
        for (p, want) in prior.probs().iter().zip([0.07, 0.13, 0.20, 0.27, 0.33]) {
            assert!((p - want).abs() < 0.005, "{p} vs {want}");
        }

        let ds = spec.sample(&[BALANCED_PER_CLASS; 5], 1).unwrap();
        assert!(ds.empirical_prior().unwrap().is_uniform());

        let single = MixtureSpec::from_scalar_means(3, &[1.0, -1.0], Prior::uniform(2)).unwrap();
        let ds = single.sample(&[1, 0], 4).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), &[0]);
        assert!(single.sample(&[0, 0], 4).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = MixtureSpec::benchmark(3, Prior::uniform(5)).unwrap();
        let a = spec.sample(&[50; 5], 77).unwrap();
        let b = spec.sample(&[50; 5], 77).unwrap();
        assert_eq!(a, b);
        let c = spec.sample(&[50; 5], 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn class_rows_have_the_right_means() {
        let spec = MixtureSpec::benchmark(1, Prior::uniform(5)).unwrap();
        let ds = spec.sample(&[4000; 5], 3).unwrap();
        let mut sums = [0.0; 5];
        for (i, &y) in ds.labels().iter().enumerate() {
            sums[y] += ds.inputs().row(i)[0];
        }
        for (y, s) in sums.iter().enumerate() {
            assert!((s / 4000.0 - TABLE_MEANS[y]).abs() < 0.06);
        }
    }

    #[test]
    fn identical_components_carry_no_information() {
        let spec = MixtureSpec::from_scalar_means(3, &[1.5, 1.5, 1.5], Prior::uniform(3)).unwrap();
        let mc = spec.mc_mi(10_000, 2).unwrap();
        assert!(mc.estimate.abs() < 1e-12);
    }

    #[test]
    fn mc_mi_rejects_tiny_n() {
        let spec = MixtureSpec::benchmark(1, Prior::uniform(5)).unwrap();
        assert!(spec.mc_mi(1, 0).is_err());
    }
}
