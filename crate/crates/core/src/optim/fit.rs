use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cce_loss, cce_loss_scaled, Optimizer, OptimizerConfig};
use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{ModelParams, TemporalAugmenter};
use crate::parallel::map_ordered_with;
use crate::tensor::{Rng, Tensor};

// stream ids for Rng::derive
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
    /// Samples per gradient work item. Results depend on this value but
    /// not on how many threads run the items.
    pub grad_chunk: usize,
    /// Fan gradient chunks out over the thread pool.
    pub parallel: bool,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, batch_size: usize, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            optimizer,
            batch_size,
            epochs,
            seed,
            shuffle: true,
            clip_norm: None,
            grad_chunk: 16,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.grad_chunk == 0 {
            return Err(Error::Config("grad_chunk must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// One entry per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    /// Columns `epoch,train_loss,train_acc,val_loss,val_acc`; missing
    /// validation values are empty fields.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<TrainLog> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
        let epochs = r
            .deserialize()
            .collect::<std::result::Result<Vec<EpochLog>, _>>()?;
        Ok(TrainLog { epochs })
    }
}

/// Hooks into the training loop, for instrumentation and progress output.
pub trait FitObserver {
    /// Called with the features of every minibatch that gradients are computed on.
    fn on_batch(&mut self, _epoch: usize, _batch: usize, _features: &Tensor) {}
    fn on_epoch(&mut self, _entry: &EpochLog) {}
}

pub struct NoopObserver;

impl FitObserver for NoopObserver {}

fn check_compatible(model: &TemporalAugmenter, ds: &Dataset, what: &str) -> Result<()> {
    let cfg = model.config();
    if ds.num_classes() != cfg.num_classes {
        return Err(Error::Data(format!(
            "{what} set has {} classes, the model expects {}",
            ds.num_classes(),
            cfg.num_classes
        )));
    }
    if ds.steps() != cfg.input_timesteps || ds.channels() != cfg.input_channels {
        return Err(Error::Schema(format!(
            "{what} set has shape [{}, {}], the model expects [{}, {}]",
            ds.steps(),
            ds.channels(),
            cfg.input_timesteps,
            cfg.input_channels
        )));
    }
    Ok(())
}

fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<usize> {
    Ok(probs
        .argmax_rows()?
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count())
}

/// Mean loss, accuracy and class probabilities in eval mode.
pub fn evaluate(
    model: &TemporalAugmenter,
    ds: &Dataset,
    batch: usize,
) -> Result<(f64, f64, Tensor)> {
    check_compatible(model, ds, "evaluation")?;
    let probs = model.predict(ds.features(), batch)?;
    let (loss, _) = cce_loss(&probs, &one_hot(ds.labels(), ds.num_classes())?)?;
    let acc = accuracy(&probs, ds.labels())? as f64 / ds.len() as f64;
    Ok((loss, acc, probs))
}

struct ChunkResult {
    loss: f64,
    correct: usize,
    grads: ModelParams,
}

/// Minibatch training. Shuffling and dropout draw from streams derived from
/// `cfg.seed`, and chunk gradients are summed in chunk order, so a run is
/// bitwise reproducible whatever the thread count. Validation data is only
/// ever evaluated, never differentiated.
pub fn fit(
    model: &mut TemporalAugmenter,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    observer: &mut dyn FitObserver,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_compatible(model, train, "training")?;
    if let Some(v) = val {
        check_compatible(model, v, "validation")?;
    }
    let base = Rng::new(cfg.seed);
    let n = train.len();
    let k = model.config().num_classes;
    let mut optimizer = Optimizer::new(cfg.optimizer, model.params())?;
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.shuffle {
            base.derive(&[SHUFFLE_STREAM, epoch as u64])
                .shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train.batch(idx)?;
            observer.on_batch(epoch, b, &x);
            let starts: Vec<usize> = (0..idx.len()).step_by(cfg.grad_chunk).collect();
            let model_ref: &TemporalAugmenter = model;
            let results = map_ordered_with(cfg.parallel, &starts, |&lo| {
                let hi = (lo + cfg.grad_chunk).min(idx.len());
                let rows: Vec<usize> = (lo..hi).collect();
                let xc = x.select(&rows)?;
                let yc = &y[lo..hi];
                let mut rng = base.derive(&[
                    DROPOUT_STREAM,
                    epoch as u64,
                    b as u64,
                    (lo / cfg.grad_chunk) as u64,
                ]);
                let (probs, trace) = model_ref.forward(&xc, Mode::Train, &mut rng)?;
                let (loss, dlogits) = cce_loss_scaled(&probs, &one_hot(yc, k)?, idx.len())?;
                let correct = accuracy(&probs, yc)?;
                let grads = model_ref.backward(trace, &dlogits)?;
                Ok(ChunkResult {
                    loss,
                    correct,
                    grads,
                })
            })?;

            let mut parts = results.into_iter();
            let first = parts.next().expect("a minibatch has at least one chunk");
            let (mut batch_loss, mut grads) = (first.loss, first.grads);
            correct += first.correct;
            for r in parts {
                batch_loss += r.loss;
                correct += r.correct;
                grads.accumulate(&r.grads)?;
            }
            let norm = grads.global_norm();
            if !batch_loss.is_finite() || !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                });
            }
            if let Some(c) = cfg.clip_norm {
                if norm > c {
                    let f = c / norm;
                    for t in grads.tensors_mut() {
                        *t = t.scale(f);
                    }
                }
            }
            optimizer.step(model.params_mut(), &grads)?;
            loss_sum += batch_loss * idx.len() as f64;
        }

        let (val_loss, val_acc) = match val {
            Some(v) => {
                let (l, a, _) = evaluate(model, v, cfg.batch_size)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_loss,
            val_acc,
        };
        observer.on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut data = Vec::new();
        for &l in &labels {
            for _ in 0..6 {
                data.push(rng.normal() * 0.3 + if l == 1 { 1.0 } else { -1.0 });
            }
        }
        Dataset::new(
            Tensor::new(vec![n, 6, 1], data).unwrap(),
            labels,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn small_model(seed: u64) -> TemporalAugmenter {
        let cfg = ModelConfig {
            conv_filters: 4,
            lstm_units: 3,
            gru_units: 3,
            dense_sizes: vec![6],
            ..ModelConfig::new(6, 1, 2)
        };
        TemporalAugmenter::build(cfg, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn epoch_count_and_rejection() {
        let ds = toy(10, 1);
        let mut m = small_model(1);
        let mut cfg = TrainConfig::new(OptimizerConfig::adam(1e-2), 4, 0, 0);
        assert!(fit(&mut m, &ds, None, &cfg, &mut NoopObserver).is_err());
        cfg.epochs = 1;
        let log = fit(&mut m, &ds, Some(&ds), &cfg, &mut NoopObserver).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log.epochs[0].val_acc.is_some());
    }

    #[test]
    fn same_seed_same_log() {
        let ds = toy(20, 2);
        let cfg = TrainConfig::new(OptimizerConfig::rmsprop(1e-2), 8, 3, 5);
        let mut a = small_model(3);
        let mut b = small_model(3);
        let la = fit(&mut a, &ds, Some(&ds), &cfg, &mut NoopObserver).unwrap();
        let lb = fit(&mut b, &ds, Some(&ds), &cfg, &mut NoopObserver).unwrap();
        assert_eq!(la.to_csv_string().unwrap(), lb.to_csv_string().unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_and_sequential_paths_agree_bitwise() {
        let ds = toy(20, 4);
        let mut cfg = TrainConfig::new(OptimizerConfig::adam(1e-2), 10, 2, 5);
        cfg.grad_chunk = 3;
        let mut par = small_model(3);
        fit(&mut par, &ds, None, &cfg, &mut NoopObserver).unwrap();
        cfg.parallel = false;
        let mut seq = small_model(3);
        fit(&mut seq, &ds, None, &cfg, &mut NoopObserver).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn learns_a_separable_toy_task() {
        let ds = toy(40, 5);
        let mut m = small_model(6);
        let cfg = TrainConfig::new(OptimizerConfig::adam(1e-2), 8, 30, 1);
        let log = fit(&mut m, &ds, None, &cfg, &mut NoopObserver).unwrap();
        assert!(log.last().unwrap().train_acc > 0.9, "{:?}", log.last());
    }

    #[test]
    fn class_mismatch_rejected() {
        let ds = toy(10, 1);
        let cfg3 = ModelConfig {
            num_classes: 3,
            ..small_model(0).config().clone()
        };
        let mut m = TemporalAugmenter::build(cfg3, &mut Rng::new(0)).unwrap();
        let cfg = TrainConfig::new(OptimizerConfig::adam(1e-2), 4, 1, 0);
        assert!(matches!(
            fit(&mut m, &ds, None, &cfg, &mut NoopObserver),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let ds = toy(10, 1);
        let mut m = small_model(1);
        for t in m.params_mut().tensors_mut() {
            *t = t.map(|_| f64::NAN);
        }
        let cfg = TrainConfig::new(OptimizerConfig::adam(1e-2), 4, 2, 0);
        match fit(&mut m, &ds, None, &cfg, &mut NoopObserver) {
            Err(Error::Divergence { epoch, batch }) => assert_eq!((epoch, batch), (1, 1)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip() {
        let log = TrainLog {
            epochs: vec![
                EpochLog {
                    epoch: 1,
                    train_loss: 0.1 + 0.2,
                    train_acc: 0.5,
                    val_loss: Some(1.0 / 3.0),
                    val_acc: Some(0.25),
                },
                EpochLog {
                    epoch: 2,
                    train_loss: 0.2,
                    train_acc: 0.75,
                    val_loss: None,
                    val_acc: None,
                },
            ],
        };
        let text = log.to_csv_string().unwrap();
        assert!(text.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        log.write_csv(&path).unwrap();
        assert_eq!(TrainLog::read_csv(&path).unwrap(), log);
    }
}
