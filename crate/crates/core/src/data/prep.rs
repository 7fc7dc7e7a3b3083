use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Per-feature mean and population standard deviation, one entry per `(t, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    /// Fit on the training partition only. Constant features get std 1.
    pub fn fit(ds: &Dataset) -> ScalerParams {
        let n = ds.len();
        let m = ds.steps() * ds.channels();
        let x = ds.features().data();
        let mut mean = vec![0.0; m];
        for row in x.chunks_exact(m) {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= n as f64;
        }
        let mut var = vec![0.0; m];
        for row in x.chunks_exact(m) {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        ScalerParams { mean, std }
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let m = ds.steps() * ds.channels();
        if m != self.features() {
            return Err(Error::Schema(format!(
                "scaler was fitted on {} features, data has {m}",
                self.features()
            )));
        }
        let mut data = ds.features().data().to_vec();
        for row in data.chunks_exact_mut(m) {
            for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        ds.with_features(Tensor::new(ds.features().shape().to_vec(), data)?)
    }
}

/// Train/validation/test ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train,
            val,
            test,
            seed,
            stratified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Config(format!(
                "split ratios must each be in (0, 1), got {r:?}"
            )));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {r:?}"
            )));
        }
        Ok(())
    }
}

fn share(n: usize, ratio: f64) -> usize {
    // the epsilon absorbs products like 0.1 * 70 landing just under an integer
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Appends `pool` split by ratio; validation and test take floor counts and
/// the remainder goes to training.
fn partition(pool: &[usize], spec: &SplitSpec, out: &mut [Vec<usize>; 3]) {
    let n_val = share(pool.len(), spec.val);
    let n_test = share(pool.len(), spec.test);
    let n_train = pool.len() - n_val - n_test;
    out[0].extend_from_slice(&pool[..n_train]);
    out[1].extend_from_slice(&pool[n_train..n_train + n_val]);
    out[2].extend_from_slice(&pool[n_train + n_val..]);
}

/// Index partitions `[train, val, test]`; disjoint, exhaustive, seeded.
pub fn split_indices(labels: &[usize], spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    let out = partition_all(labels, spec);
    for (part, name) in out.iter().zip(["train", "validation", "test"]) {
        if part.is_empty() {
            return Err(Error::Data(format!(
                "{name} split is empty for {} samples with ratios {:?}",
                labels.len(),
                [spec.train, spec.val, spec.test]
            )));
        }
    }
    Ok(out)
}

fn partition_all(labels: &[usize], spec: &SplitSpec) -> [Vec<usize>; 3] {
    let rng = Rng::new(spec.seed);
    let mut out: [Vec<usize>; 3] = Default::default();
    if spec.stratified {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        for class in 0..k {
            let mut pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            rng.derive(&[class as u64]).shuffle(&mut pool);
            partition(&pool, spec, &mut out);
        }
    } else {
        let mut pool: Vec<usize> = (0..labels.len()).collect();
        rng.derive(&[u64::MAX]).shuffle(&mut pool);
        partition(&pool, spec, &mut out);
    }
    out
}

/// Two-way variant for data that comes with its own test file: `[rest, held]`
/// where `held` takes the floor of `ratio * n` (per class when stratified).
pub fn holdout_indices(
    labels: &[usize],
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<[Vec<usize>; 2]> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "holdout ratio must be in (0, 1), got {ratio}"
        )));
    }
    let spec = SplitSpec {
        train: 1.0 - ratio,
        val: ratio,
        test: 0.0,
        seed,
        stratified,
    };
    let [rest, held, _] = partition_all(labels, &spec);
    if rest.is_empty() || held.is_empty() {
        return Err(Error::Data(format!(
            "holdout of {ratio} leaves an empty side for {} samples",
            labels.len()
        )));
    }
    Ok([rest, held])
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = split_indices(ds.labels(), spec)?;
    Ok((ds.subset(&tr)?, ds.subset(&va)?, ds.subset(&te)?))
}

/// `n` samples drawn without replacement, keeping class proportions
/// (floor per class, leftovers filled from a seeded shuffle of the rest).
pub fn subsample_stratified(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} of {} samples",
            ds.len()
        )));
    }
    let rng = Rng::new(seed);
    let total = ds.len();
    let mut chosen = Vec::with_capacity(n);
    let mut rest = Vec::new();
    for (class, &count) in ds.class_counts().iter().enumerate() {
        let mut pool: Vec<usize> = (0..total).filter(|&i| ds.labels()[i] == class).collect();
        rng.derive(&[class as u64]).shuffle(&mut pool);
        let take = count * n / total;
        chosen.extend_from_slice(&pool[..take]);
        rest.extend_from_slice(&pool[take..]);
    }
    rng.derive(&[u64::MAX]).shuffle(&mut rest);
    chosen.extend_from_slice(&rest[..n - chosen.len()]);
    chosen.sort_unstable();
    ds.subset(&chosen)
}
