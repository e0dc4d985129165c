//! Synthetic dataset generators and MNIST-subset ingestion, with the
//! labeled/unlabeled split applied deterministically from the seed.

use crate::error::{HarnessError, Result};
use crate::idx::read_idx;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use ssdrl_core::models::Example;
use ssdrl_core::numeric;
use ssdrl_core::trainer::SemiDataset;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    TwoGaussians,
    TwoMoons,
    Xor,
    MnistSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
}

/// Declarative description of a dataset: kind, size, supervision ratio,
/// noise level, and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub eta: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mnist_paths: Option<MnistPaths>,
    /// Held-out test-set size; defaults to n.
    #[serde(default)]
    pub test_n: Option<usize>,
}

fn default_noise() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(HarnessError::config("n must be at least 10"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(HarnessError::config("eta must lie in (0, 1]"));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(HarnessError::config("noise must be >= 0"));
        }
        if self.kind == DatasetKind::MnistSubset && self.mnist_paths.is_none() {
            return Err(HarnessError::config("mnist-subset needs mnist_paths"));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        match self.kind {
            DatasetKind::MnistSubset => 10,
            _ => 2,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.kind {
            DatasetKind::MnistSubset => 784,
            _ => 2,
        }
    }
}

fn two_gaussians(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Vec<Example> {
    // far-separated means: the Bayes error is negligible at unit noise
    let means = [[-2.5, -2.5], [2.5, 2.5]];
    (0..n)
        .map(|_| {
            let class = rng.random_range(0..2usize);
            let features = vec![
                means[class][0] + noise * numeric::gaussian(rng),
                means[class][1] + noise * numeric::gaussian(rng),
            ];
            Example::labeled(features, class)
        })
        .collect()
}

fn two_moons(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let class = rng.random_range(0..2usize);
            let t = std::f64::consts::PI * rng.random::<f64>();
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let features = vec![
                x + noise * numeric::gaussian(rng),
                y + noise * numeric::gaussian(rng),
            ];
            Example::labeled(features, class)
        })
        .collect()
}

fn xor_blobs(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let class = if sx * sy > 0.0 { 0 } else { 1 };
            let features = vec![
                sx + noise * numeric::gaussian(rng),
                sy + noise * numeric::gaussian(rng),
            ];
            Example::labeled(features, class)
        })
        .collect()
}

/// Generate the training split (with labels hidden on the unlabeled part)
/// and a disjoint fully-labeled test set. Deterministic in the seed; the
/// labeled subset has exactly round(η·n) elements.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<(SemiDataset, Vec<Example>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let n_test = spec.test_n.unwrap_or(n);
    let total = n + n_test;
    let pool: Vec<Example> = match spec.kind {
        DatasetKind::TwoGaussians => two_gaussians(&mut rng, total, spec.noise),
        DatasetKind::TwoMoons => two_moons(&mut rng, total, spec.noise),
        DatasetKind::Xor => xor_blobs(&mut rng, total, spec.noise),
        DatasetKind::MnistSubset => {
            let paths = spec.mnist_paths.as_ref().unwrap();
            let all = read_idx(&paths.images, &paths.labels)?;
            match (&paths.test_images, &paths.test_labels) {
                (Some(ti), Some(tl)) => {
                    let test_pool = read_idx(ti, tl)?;
                    if all.len() < n || test_pool.len() < n_test {
                        return Err(HarnessError::config(format!(
                            "requested {n}+{n_test} examples, files hold {}+{}",
                            all.len(),
                            test_pool.len()
                        )));
                    }
                    let train_idx = sample(&mut rng, all.len(), n);
                    let test_idx = sample(&mut rng, test_pool.len(), n_test);
                    let mut picked: Vec<Example> =
                        train_idx.iter().map(|i| all[i].clone()).collect();
                    picked.extend(test_idx.iter().map(|i| test_pool[i].clone()));
                    picked
                }
                _ => {
                    if all.len() < total {
                        return Err(HarnessError::config(format!(
                            "requested {total} examples, files hold {}",
                            all.len()
                        )));
                    }
                    sample(&mut rng, all.len(), total)
                        .iter()
                        .map(|i| all[i].clone())
                        .collect()
                }
            }
        }
    };
    let (train_pool, test) = pool.split_at(n);
    let n_labeled = ((spec.eta * n as f64).round() as usize).clamp(1, n);
    let labeled = sample(&mut rng, n, n_labeled).iter().collect();
    let data = SemiDataset::new(train_pool.to_vec(), labeled)?;
    Ok((data, test.to_vec()))
}

/// On-disk dataset: the training examples with full labels plus the split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedDataset {
    pub examples: Vec<Example>,
    pub labeled_indices: Vec<usize>,
    pub test: Vec<Example>,
}

impl SavedDataset {
    pub fn from_parts(data: &SemiDataset, test: &[Example]) -> Self {
        let examples = (0..data.n())
            .map(|i| Example {
                features: data.example(i).features.clone(),
                label: data.ground_truth(i),
            })
            .collect();
        SavedDataset {
            examples,
            labeled_indices: data.labeled_indices().to_vec(),
            test: test.to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(SemiDataset, Vec<Example>)> {
        let data = SemiDataset::new(self.examples, self.labeled_indices)?;
        Ok((data, self.test))
    }
}
