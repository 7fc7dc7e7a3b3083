//! Data loading, partitioning and the train/evaluate flow shared by the commands.

use std::path::Path;

use serde::{Deserialize, Serialize};
use temporal_augmenter::data::{
    holdout_indices, load_csv_signals, load_wav_dir_with, split_indices, subsample_stratified,
    CsvSchema, Dataset, ScalerParams, WavOptions,
};
use temporal_augmenter::metrics::{ParamCounts, Report};
use temporal_augmenter::model::{Checkpoint, TemporalAugmenter};
use temporal_augmenter::optim::{evaluate, fit, FitObserver, TrainLog};
use temporal_augmenter::{Error, Result, Rng};

use crate::config::{DataFormat, RunConfig};

/// Stream id for model initialisation, kept apart from the training streams.
const INIT_STREAM: u64 = 0x1417;

pub fn load_dataset(path: &Path, format: &DataFormat) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data path does not exist"),
        ));
    }
    match format {
        DataFormat::Mitbih => load_csv_signals(path, &CsvSchema::Mitbih),
        DataFormat::Ionosphere => load_csv_signals(path, &CsvSchema::Ionosphere),
        DataFormat::Generic { label_col } => load_csv_signals(
            path,
            &CsvSchema::Generic {
                label_col: label_col.clone(),
            },
        ),
        DataFormat::Wav {
            target_len,
            features,
        } => load_wav_dir_with(
            path,
            &WavOptions {
                target_len: *target_len,
                features: *features,
            },
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

/// Unscaled train/validation/test sets.
pub struct Partitions {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Partitions {
    pub fn get(&self, name: SplitName) -> &Dataset {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

fn maybe_subsample(ds: Dataset, n: Option<usize>, seed: u64) -> Result<Dataset> {
    match n {
        Some(n) if n < ds.len() => subsample_stratified(&ds, n, seed),
        _ => Ok(ds),
    }
}

pub fn load_partitions(cfg: &RunConfig) -> Result<Partitions> {
    let seed = cfg.split.seed;
    let ds = maybe_subsample(load_dataset(&cfg.data, &cfg.format)?, cfg.subsample, seed)?;
    match &cfg.test_data {
        None => {
            let [tr, va, te] = split_indices(ds.labels(), &cfg.split)?;
            Ok(Partitions {
                train: ds.subset(&tr)?,
                val: ds.subset(&va)?,
                test: ds.subset(&te)?,
            })
        }
        Some(test_path) => {
            let test = maybe_subsample(
                load_dataset(test_path, &cfg.format)?,
                cfg.test_subsample,
                seed,
            )?;
            if test.class_names() != ds.class_names() {
                return Err(Error::Data(format!(
                    "{} has classes {:?}, {} has {:?}",
                    test_path.display(),
                    test.class_names(),
                    cfg.data.display(),
                    ds.class_names()
                )));
            }
            let ratio = cfg.split.val / (cfg.split.train + cfg.split.val);
            let [tr, va] = holdout_indices(ds.labels(), ratio, seed, cfg.split.stratified)?;
            Ok(Partitions {
                train: ds.subset(&tr)?,
                val: ds.subset(&va)?,
                test,
            })
        }
    }
}

/// What a checkpoint carries besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run: RunConfig,
    pub class_names: Vec<String>,
    pub scaler: Option<ScalerParams>,
}

impl RunMetadata {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<RunMetadata> {
        serde_json::from_value(ck.metadata.clone())
            .map_err(|e| Error::Checkpoint(format!("metadata does not describe a run: {e}")))
    }

    pub fn scale(&self, ds: &Dataset) -> Result<Dataset> {
        match &self.scaler {
            Some(s) => s.apply(ds),
            None => Ok(ds.clone()),
        }
    }
}

pub struct TrainedRun {
    pub model: TemporalAugmenter,
    pub log: TrainLog,
    pub metadata: RunMetadata,
    pub test_report: Report,
}

impl TrainedRun {
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(self
            .model
            .to_checkpoint(serde_json::to_value(&self.metadata)?))
    }
}

/// Report for one dataset, which must already be scaled.
pub fn report_for(model: &TemporalAugmenter, ds: &Dataset, batch: usize) -> Result<Report> {
    let (_, _, probs) = evaluate(model, ds, batch)?;
    Report::from_scores(
        &probs,
        ds.labels(),
        ds.class_names(),
        Some(ParamCounts::all_trainable(model.param_count())),
    )
}

/// Load, split, scale on train, build, fit, and score the test split.
pub fn train_run(cfg: &RunConfig, observer: &mut dyn FitObserver) -> Result<TrainedRun> {
    let parts = load_partitions(cfg)?;
    let scaler = cfg.standardize.then(|| ScalerParams::fit(&parts.train));
    let metadata = RunMetadata {
        run: cfg.clone(),
        class_names: parts.train.class_names().to_vec(),
        scaler,
    };
    let train = metadata.scale(&parts.train)?;
    let val = metadata.scale(&parts.val)?;
    let test = metadata.scale(&parts.test)?;

    let model_cfg = cfg
        .model
        .model_config(train.steps(), train.channels(), train.num_classes());
    let mut model =
        TemporalAugmenter::build(model_cfg, &mut Rng::new(cfg.seed()).derive(&[INIT_STREAM]))?;
    let log = fit(&mut model, &train, Some(&val), &cfg.train, observer)?;
    let test_report = report_for(&model, &test, cfg.train.batch_size)?;
    Ok(TrainedRun {
        model,
        log,
        metadata,
        test_report,
    })
}
