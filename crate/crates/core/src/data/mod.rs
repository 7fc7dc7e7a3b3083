//! Datasets, loaders and preprocessing.

mod csv_signals;
mod prep;
mod wav;

pub use csv_signals::{load_csv_signals, CsvSchema, MITBIH_CLASSES};
pub use prep::{
    holdout_indices, split, split_indices, subsample_stratified, ScalerParams, SplitSpec,
};
pub use wav::{load_wav_dir, load_wav_dir_with, WavFeatures, WavOptions};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labelled sequences, `features: [n, T, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
    sample_rate: Option<u32>,
}

impl Dataset {
    /// Accepts `[n, T, d]` features, or `[n, m]` which is read as `[n, m, 1]`.
    pub fn new(features: Tensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let features = match features.ndim() {
            2 => {
                let (n, m) = features.dims2("dataset")?;
                features.reshape(&[n, m, 1])?
            }
            3 => features,
            _ => {
                return Err(Error::Data(format!(
                    "features must be rank 2 or 3, got {:?}",
                    features.shape()
                )))
            }
        };
        let n = features.shape()[0];
        if labels.len() != n {
            return Err(Error::Data(format!(
                "{} labels for {n} samples",
                labels.len()
            )));
        }
        let k = class_names.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let mut sorted = class_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::Data("class names must be unique".into()));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
            sample_rate: None,
        })
    }

    pub fn with_sample_rate(mut self, rate: u32) -> Self {
        self.sample_rate = Some(rate);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.features.shape()[2]
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn sample_rate(&self) -> Option<u32> {
        self.sample_rate
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Data("empty subset".into()));
        }
        Ok(Dataset {
            features: self.features.select(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            sample_rate: self.sample_rate,
        })
    }

    /// Features and labels at `indices` without building a new dataset.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.features.select(indices)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    pub fn with_features(&self, features: Tensor) -> Result<Dataset> {
        if features.shape() != self.features.shape() {
            return Err(Error::shape(
                "dataset features",
                features.shape(),
                self.features.shape(),
            ));
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }
}

/// `[n, k]` matrix of unit rows.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    if labels.is_empty() || k == 0 {
        return Err(Error::InvalidArgument(
            "one_hot needs at least one label and one class".into(),
        ));
    }
    let mut data = vec![0.0; labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {k} classes"
            )));
        }
        data[i * k + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}
