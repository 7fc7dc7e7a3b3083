//! Two-stream convolutional–recurrent time-series classifier.
//!
//! A short-term stream (Conv1D → activation → max-pool → dropout → GRU) and a
//! long-term stream (the same front-end feeding an LSTM) read the same input.
//! Their final hidden states are concatenated and passed through a small dense
//! head with a softmax output. Everything is implemented on a plain `f64`
//! tensor with hand-written forward and backward passes.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod recurrent;
pub mod tensor;

pub use error::{Error, Result};
pub use layers::Mode;
pub use model::{ModelConfig, ModelParams, StreamOutput, Streams, TemporalAugmenter};
pub use tensor::{Rng, Tensor};
