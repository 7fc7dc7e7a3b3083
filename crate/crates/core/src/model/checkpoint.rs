use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, TemporalAugmenter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "temporal-augmenter";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing model snapshot.
///
/// Floats are written with shortest round-trip formatting and parsed back
/// exactly, so a save/load cycle is bitwise lossless. `metadata` carries
/// whatever the caller needs to reproduce preprocessing (class names,
/// scaler statistics, split spec, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown checkpoint format {:?}",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        Ok(ck)
    }
}

impl TemporalAugmenter {
    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        let tensors = self
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            metadata,
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        let mut params = ModelParams::zeros(&ck.config);
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                ck.tensors.len()
            )));
        }
        for ((slot, name), stored) in params
            .tensors_mut()
            .into_iter()
            .zip(&names)
            .zip(&ck.tensors)
        {
            if &stored.name != name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {name}, found {}",
                    stored.name
                )));
            }
            if stored.shape != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    stored.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(stored.shape.clone(), stored.data.clone())
                .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        }
        TemporalAugmenter::from_params(ck.config.clone(), params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn model() -> TemporalAugmenter {
        let cfg = ModelConfig {
            conv_filters: 4,
            dense_sizes: vec![5],
            ..ModelConfig::new(8, 1, 3)
        };
        TemporalAugmenter::build(cfg, &mut Rng::new(11)).unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.to_checkpoint(serde_json::json!({"classes": ["a", "b", "c"]}))
            .save(&path)
            .unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        let back = TemporalAugmenter::from_checkpoint(&ck).unwrap();
        for ((_, a), (_, b)) in m
            .params()
            .named_tensors()
            .into_iter()
            .zip(back.params().named_tensors())
        {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(ck.metadata["classes"][2], "c");
    }

    #[test]
    fn tampered_checkpoints_rejected() {
        let m = model();
        let mut ck = m.to_checkpoint(serde_json::Value::Null);
        ck.tensors[0].shape = vec![1, 1, 1];
        assert!(TemporalAugmenter::from_checkpoint(&ck).is_err());
        let mut ck = m.to_checkpoint(serde_json::Value::Null);
        ck.tensors.swap(0, 1);
        assert!(TemporalAugmenter::from_checkpoint(&ck).is_err());
        let mut ck = m.to_checkpoint(serde_json::Value::Null);
        ck.tensors.pop();
        assert!(TemporalAugmenter::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn wrong_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut ck = model().to_checkpoint(serde_json::Value::Null);
        ck.version = 99;
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
