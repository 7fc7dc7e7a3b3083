//! Run configuration: a flat TOML file whose `preset` key fills in the
//! per-task defaults before any other key overrides them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use temporal_augmenter::data::{SplitSpec, WavFeatures};
use temporal_augmenter::layers::Activation;
use temporal_augmenter::model::{ModelConfig, StreamOutput, Streams};
use temporal_augmenter::optim::{OptimizerConfig, TrainConfig};
use temporal_augmenter::{Error, Result};

/// Environment variable holding the directory relative data paths resolve against.
pub const DATA_ROOT_ENV: &str = "TEMPAUG_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tess,
    Mitbih,
    Ionosphere,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataFormat {
    Mitbih,
    Ionosphere,
    Generic {
        label_col: String,
    },
    Wav {
        target_len: usize,
        features: WavFeatures,
    },
}

/// Everything in [`ModelConfig`] except the input shape and class count,
/// which come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_activation: Activation,
    pub pool_size: usize,
    pub dropout_stream: f64,
    pub dropout_head: f64,
    pub lstm_units: usize,
    pub gru_units: usize,
    pub dense_sizes: Vec<usize>,
    pub streams: Streams,
    pub stream_output: StreamOutput,
}

impl ModelSettings {
    pub fn model_config(&self, steps: usize, channels: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            input_timesteps: steps,
            input_channels: channels,
            conv_filters: self.conv_filters,
            conv_kernel: self.conv_kernel,
            conv_activation: self.conv_activation,
            pool_size: self.pool_size,
            dropout_stream: self.dropout_stream,
            dropout_head: self.dropout_head,
            lstm_units: self.lstm_units,
            gru_units: self.gru_units,
            dense_sizes: self.dense_sizes.clone(),
            num_classes: classes,
            streams: self.streams,
            stream_output: self.stream_output,
        }
    }
}

/// A fully expanded run description. It is stored in every checkpoint so
/// `eval` can rebuild the same partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub data: PathBuf,
    /// Separate test file; when present the main file is split into train and validation only.
    pub test_data: Option<PathBuf>,
    pub format: DataFormat,
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
    pub split: SplitSpec,
    pub standardize: bool,
    pub train: TrainConfig,
    pub model: ModelSettings,
}

/// The file as written; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<Preset>,
    data: Option<PathBuf>,
    test_data: Option<PathBuf>,
    format: Option<String>,
    label_col: Option<String>,
    target_len: Option<usize>,
    wav_features: Option<String>,
    frame: Option<usize>,
    subsample: Option<usize>,
    test_subsample: Option<usize>,
    seed: Option<u64>,
    split_seed: Option<u64>,
    train_ratio: Option<f64>,
    val_ratio: Option<f64>,
    test_ratio: Option<f64>,
    stratified: Option<bool>,
    standardize: Option<bool>,
    optimizer: Option<String>,
    lr: Option<f64>,
    epsilon: Option<f64>,
    rho: Option<f64>,
    momentum: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    shuffle: Option<bool>,
    clip_norm: Option<f64>,
    grad_chunk: Option<usize>,
    parallel: Option<bool>,
    conv_filters: Option<usize>,
    conv_kernel: Option<usize>,
    conv_activation: Option<Activation>,
    pool_size: Option<usize>,
    dropout_stream: Option<f64>,
    dropout_head: Option<f64>,
    lstm_units: Option<usize>,
    gru_units: Option<usize>,
    dense_sizes: Option<Vec<usize>>,
    streams: Option<Streams>,
    stream_output: Option<StreamOutput>,
}

/// Per-task defaults.
struct PresetDefaults {
    format: Option<&'static str>,
    ratios: (f64, f64, f64),
    stratified: bool,
    optimizer: &'static str,
    batch_size: usize,
    epochs: usize,
    dropout_stream: f64,
    dropout_head: f64,
    target_len: usize,
}

fn defaults(preset: Preset) -> PresetDefaults {
    match preset {
        Preset::Tess => PresetDefaults {
            format: Some("wav"),
            ratios: (0.7, 0.1, 0.2),
            stratified: false,
            optimizer: "rmsprop",
            batch_size: 32,
            epochs: 20,
            dropout_stream: 0.2,
            dropout_head: 0.2,
            target_len: 4096,
        },
        Preset::Mitbih => PresetDefaults {
            format: Some("mitbih"),
            ratios: (0.6, 0.2, 0.2),
            stratified: true,
            optimizer: "adam",
            batch_size: 128,
            epochs: 50,
            dropout_stream: 0.5,
            dropout_head: 0.3,
            target_len: 4096,
        },
        Preset::Ionosphere => PresetDefaults {
            format: Some("ionosphere"),
            ratios: (0.6, 0.2, 0.2),
            stratified: false,
            optimizer: "adam",
            batch_size: 128,
            epochs: 100,
            dropout_stream: 0.2,
            dropout_head: 0.2,
            target_len: 4096,
        },
        Preset::Custom => PresetDefaults {
            format: None,
            ratios: (0.6, 0.2, 0.2),
            stratified: false,
            optimizer: "adam",
            batch_size: 32,
            epochs: 10,
            dropout_stream: 0.2,
            dropout_head: 0.2,
            target_len: 4096,
        },
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Absolute paths are kept; relative ones resolve against `data_root` when
/// given, otherwise against the config file's directory.
pub fn resolve_path(p: &Path, data_root: Option<&Path>, config_dir: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        data_root.unwrap_or(config_dir).join(p)
    }
}

impl RunConfig {
    pub fn from_toml_str(
        text: &str,
        config_dir: &Path,
        data_root: Option<&Path>,
        seed_override: Option<u64>,
    ) -> Result<RunConfig> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        let preset = f.preset.unwrap_or(Preset::Custom);
        let d = defaults(preset);

        let data = f
            .data
            .as_deref()
            .ok_or_else(|| cfg_err("missing key `data`"))?;
        let data = resolve_path(data, data_root, config_dir);
        let test_data = f
            .test_data
            .as_deref()
            .map(|p| resolve_path(p, data_root, config_dir));

        let format_name = f
            .format
            .as_deref()
            .or(d.format)
            .ok_or_else(|| cfg_err("missing key `format`"))?;
        let format = match format_name {
            "mitbih" => DataFormat::Mitbih,
            "ionosphere" => DataFormat::Ionosphere,
            "generic" => DataFormat::Generic {
                label_col: f
                    .label_col
                    .clone()
                    .ok_or_else(|| cfg_err("format `generic` needs `label_col`"))?,
            },
            "wav" => {
                let features = match f.wav_features.as_deref().unwrap_or("raw") {
                    "raw" => WavFeatures::Raw,
                    "frame-energy" => WavFeatures::FrameEnergy {
                        frame: f
                            .frame
                            .ok_or_else(|| cfg_err("`frame-energy` needs `frame`"))?,
                    },
                    other => return Err(cfg_err(format!("unknown wav_features {other:?}"))),
                };
                DataFormat::Wav {
                    target_len: f.target_len.unwrap_or(d.target_len),
                    features,
                }
            }
            other => return Err(cfg_err(format!("unknown format {other:?}"))),
        };

        let seed = seed_override.or(f.seed).unwrap_or(0);
        let (tr, va, te) = d.ratios;
        let split = SplitSpec {
            train: f.train_ratio.unwrap_or(tr),
            val: f.val_ratio.unwrap_or(va),
            test: f.test_ratio.unwrap_or(te),
            seed: f.split_seed.unwrap_or(seed),
            stratified: f.stratified.unwrap_or(d.stratified),
        };
        if test_data.is_none() {
            split.validate()?;
        } else if !(split.train > 0.0 && split.val > 0.0) {
            return Err(cfg_err("train_ratio and val_ratio must be positive"));
        }

        let lr = f.lr.unwrap_or(1e-3);
        let optimizer = match f.optimizer.as_deref().unwrap_or(d.optimizer) {
            "rmsprop" => OptimizerConfig::Rmsprop {
                lr,
                rho: f.rho.unwrap_or(0.9),
                momentum: f.momentum.unwrap_or(0.0),
                epsilon: f.epsilon.unwrap_or(1e-7),
            },
            "adam" => OptimizerConfig::Adam {
                lr,
                beta1: f.beta1.unwrap_or(0.9),
                beta2: f.beta2.unwrap_or(0.999),
                epsilon: f.epsilon.unwrap_or(1e-7),
            },
            other => return Err(cfg_err(format!("unknown optimizer {other:?}"))),
        };
        let mut train = TrainConfig::new(
            optimizer,
            f.batch_size.unwrap_or(d.batch_size),
            f.epochs.unwrap_or(d.epochs),
            seed,
        );
        train.shuffle = f.shuffle.unwrap_or(true);
        train.clip_norm = f.clip_norm;
        train.grad_chunk = f.grad_chunk.unwrap_or(train.grad_chunk);
        train.parallel = f.parallel.unwrap_or(true);
        train.validate()?;

        let base = ModelConfig::new(1, 1, 2);
        let model = ModelSettings {
            conv_filters: f.conv_filters.unwrap_or(base.conv_filters),
            conv_kernel: f.conv_kernel.unwrap_or(base.conv_kernel),
            conv_activation: f.conv_activation.unwrap_or(base.conv_activation),
            pool_size: f.pool_size.unwrap_or(base.pool_size),
            dropout_stream: f.dropout_stream.unwrap_or(d.dropout_stream),
            dropout_head: f.dropout_head.unwrap_or(d.dropout_head),
            lstm_units: f.lstm_units.unwrap_or(base.lstm_units),
            gru_units: f.gru_units.unwrap_or(base.gru_units),
            dense_sizes: f.dense_sizes.clone().unwrap_or(base.dense_sizes),
            streams: f.streams.unwrap_or(base.streams),
            stream_output: f.stream_output.unwrap_or(base.stream_output),
        };
        if let Some(0) = f.subsample {
            return Err(cfg_err("subsample must be positive"));
        }

        Ok(RunConfig {
            preset,
            data,
            test_data,
            format,
            subsample: f.subsample,
            test_subsample: f.test_subsample,
            split,
            standardize: f.standardize.unwrap_or(true),
            train,
            model,
        })
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        RunConfig::from_toml_str(&text, dir, root.as_deref(), seed_override)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}
