//! The two-stream classifier.
//!
//! ```text
//! x ─┬─ conv → act → maxpool → dropout → GRU  ─┐ (short-term stream)
//!    └─ conv → act → maxpool → dropout → LSTM ─┤ (long-term stream)
//!                                              concat → [dense → relu (→ dropout after the first)]* → dense → softmax
//! ```
//!
//! Either stream can be switched off for single-stream baselines.

mod checkpoint;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    Activation, ActivationCache, Conv1dCache, Conv1dParams, DenseCache, DenseParams, Dropout,
    DropoutCache, MaxPool1d, MaxPoolCache, Mode,
};
use crate::recurrent::{last_hidden, CellKind, InitialState, Recurrent, SequenceCache};
use crate::tensor::{init_glorot_uniform, init_he_uniform, softmax, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Streams {
    Both,
    /// LSTM stream only.
    LongOnly,
    /// GRU stream only.
    ShortOnly,
}

/// What each recurrent stream hands to the concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamOutput {
    /// Final hidden state, `[n, units]`.
    Last,
    /// Every hidden state flattened, `[n, steps * units]`.
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_timesteps: usize,
    pub input_channels: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_activation: Activation,
    pub pool_size: usize,
    pub dropout_stream: f64,
    pub dropout_head: f64,
    pub lstm_units: usize,
    pub gru_units: usize,
    pub dense_sizes: Vec<usize>,
    pub num_classes: usize,
    pub streams: Streams,
    pub stream_output: StreamOutput,
}

impl ModelConfig {
    /// Defaults for everything but the input shape and class count.
    pub fn new(input_timesteps: usize, input_channels: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_timesteps,
            input_channels,
            conv_filters: 128,
            conv_kernel: 1,
            conv_activation: Activation::Relu,
            pool_size: 2,
            dropout_stream: 0.2,
            dropout_head: 0.2,
            lstm_units: 10,
            gru_units: 10,
            dense_sizes: vec![64, 32],
            num_classes,
            streams: Streams::Both,
            stream_output: StreamOutput::Last,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_timesteps", self.input_timesteps),
            ("input_channels", self.input_channels),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("pool_size", self.pool_size),
            ("lstm_units", self.lstm_units),
            ("gru_units", self.gru_units),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.dense_sizes.contains(&0) {
            return Err(Error::Config("dense sizes must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        for (name, rate) in [
            ("dropout_stream", self.dropout_stream),
            ("dropout_head", self.dropout_head),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "{name} must be in [0, 1), got {rate}"
                )));
            }
        }
        if self.input_timesteps < self.conv_kernel {
            return Err(Error::Config(format!(
                "conv_kernel {} exceeds input_timesteps {}",
                self.conv_kernel, self.input_timesteps
            )));
        }
        if self.conv_steps() < self.pool_size {
            return Err(Error::Config(format!(
                "pool_size {} exceeds the {} steps left after convolution",
                self.pool_size,
                self.conv_steps()
            )));
        }
        Ok(())
    }

    fn conv_steps(&self) -> usize {
        self.input_timesteps + 1 - self.conv_kernel
    }

    /// Sequence length seen by the recurrent cells.
    pub fn recurrent_steps(&self) -> usize {
        self.conv_steps() / self.pool_size
    }

    fn stream_width(&self, units: usize) -> usize {
        match self.stream_output {
            StreamOutput::Last => units,
            StreamOutput::Flatten => units * self.recurrent_steps(),
        }
    }

    pub fn has_short(&self) -> bool {
        matches!(self.streams, Streams::Both | Streams::ShortOnly)
    }

    pub fn has_long(&self) -> bool {
        matches!(self.streams, Streams::Both | Streams::LongOnly)
    }

    /// Width of the concatenated stream outputs entering the dense head.
    pub fn concat_width(&self) -> usize {
        let mut w = 0;
        if self.has_short() {
            w += self.stream_width(self.gru_units);
        }
        if self.has_long() {
            w += self.stream_width(self.lstm_units);
        }
        w
    }
}

/// Convolution front-end plus recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub conv: Conv1dParams,
    pub cell: Recurrent,
}

impl Stream {
    fn zeros(config: &ModelConfig, kind: CellKind, units: usize) -> Self {
        Stream {
            conv: Conv1dParams::zeros(
                config.conv_kernel,
                config.input_channels,
                config.conv_filters,
            ),
            cell: Recurrent::zeros(kind, config.conv_filters, units),
        }
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub short: Option<Stream>,
    pub long: Option<Stream>,
    /// hidden dense layers followed by the output layer
    pub head: Vec<DenseParams>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let short = config
            .has_short()
            .then(|| Stream::zeros(config, CellKind::Gru, config.gru_units));
        let long = config
            .has_long()
            .then(|| Stream::zeros(config, CellKind::Lstm, config.lstm_units));
        let mut widths = vec![config.concat_width()];
        widths.extend(&config.dense_sizes);
        widths.push(config.num_classes);
        let head = widths
            .windows(2)
            .map(|w| DenseParams::zeros(w[0], w[1]))
            .collect();
        ModelParams { short, long, head }
    }

    /// Stable, ordered `(name, tensor)` listing; the order is the optimizer-slot order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, stream, cell) in [("short", &self.short, "gru"), ("long", &self.long, "lstm")]
        {
            if let Some(s) = stream {
                out.push((format!("{prefix}.conv.kernel"), &s.conv.kernel));
                out.push((format!("{prefix}.conv.bias"), &s.conv.bias));
                for (name, t) in s.cell.named_tensors() {
                    out.push((format!("{prefix}.{cell}.{name}"), t));
                }
            }
        }
        let last = self.head.len() - 1;
        for (i, d) in self.head.iter().enumerate() {
            let prefix = if i == last {
                "output".to_string()
            } else {
                format!("dense{i}")
            };
            out.push((format!("{prefix}.weight"), &d.weight));
            out.push((format!("{prefix}.bias"), &d.bias));
        }
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in [&mut self.short, &mut self.long].into_iter().flatten() {
            out.push(&mut s.conv.kernel);
            out.push(&mut s.conv.bias);
            out.extend(s.cell.tensors_mut());
        }
        for d in &mut self.head {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &ModelParams) -> Result<()> {
        let theirs = other.named_tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::InvalidArgument(
                "gradient sets have different layouts".into(),
            ));
        }
        for (m, (_, t)) in mine.into_iter().zip(theirs) {
            m.add_assign(t)?;
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug)]
struct StreamTrace {
    conv: Conv1dCache,
    act: ActivationCache,
    pool: MaxPoolCache,
    drop: DropoutCache,
    cell: SequenceCache,
    hidden_shape: Vec<usize>,
}

#[derive(Debug)]
struct HeadTrace {
    dense: DenseCache,
    act: Option<ActivationCache>,
    drop: Option<DropoutCache>,
}

/// Everything [`TemporalAugmenter::backward`] needs from one forward pass.
///
/// `backward` takes the trace by value, so each trace feeds at most one
/// backward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    version: u64,
    short: Option<StreamTrace>,
    long: Option<StreamTrace>,
    head: Vec<HeadTrace>,
    probs: Tensor,
}

impl ForwardTrace {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAugmenter {
    config: ModelConfig,
    params: ModelParams,
    /// bumped on every mutable access to the parameters, so stale traces are detected
    version: u64,
}

impl TemporalAugmenter {
    /// He-uniform conv kernels, glorot-uniform dense and recurrent input
    /// kernels, orthogonal recurrent kernels, zero biases.
    pub fn build(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ModelParams::zeros(&config);
        let fan_conv = config.conv_kernel * config.input_channels;
        let conv_shape = [
            config.conv_kernel,
            config.input_channels,
            config.conv_filters,
        ];
        if let Some(s) = params.short.as_mut() {
            s.conv.kernel = init_he_uniform(fan_conv, &conv_shape, rng)?;
            s.cell = Recurrent::init(CellKind::Gru, config.conv_filters, config.gru_units, rng)?;
        }
        if let Some(s) = params.long.as_mut() {
            s.conv.kernel = init_he_uniform(fan_conv, &conv_shape, rng)?;
            s.cell = Recurrent::init(CellKind::Lstm, config.conv_filters, config.lstm_units, rng)?;
        }
        for d in &mut params.head {
            let (i, o) = (d.inputs(), d.outputs());
            d.weight = init_glorot_uniform(i, o, &[i, o], rng)?;
        }
        Ok(TemporalAugmenter {
            config,
            params,
            version: 0,
        })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let expected = ModelParams::zeros(&config);
        let want: Vec<_> = expected
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let got: Vec<_> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if want != got {
            return Err(Error::InvalidArgument(
                "parameter layout does not match the config".into(),
            ));
        }
        Ok(TemporalAugmenter {
            config,
            params,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding traces.
    pub fn params_mut(&mut self) -> &mut ModelParams {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn stream_forward(
        &self,
        stream: &Stream,
        x: &Tensor,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, StreamTrace)> {
        let cfg = &self.config;
        let (y, conv) = stream.conv.forward(x)?;
        let (y, act) = cfg.conv_activation.forward(&y);
        let (y, pool) = MaxPool1d::new(cfg.pool_size)?.forward(&y)?;
        let (y, drop) = Dropout::new(cfg.dropout_stream)?.forward(&y, mode, rng);
        let (hseq, cell) = stream.cell.forward(&y, &InitialState::default())?;
        let out = match cfg.stream_output {
            StreamOutput::Last => last_hidden(&hseq)?,
            StreamOutput::Flatten => {
                let n = hseq.shape()[0];
                let width = hseq.len() / n;
                hseq.clone().reshape(&[n, width])?
            }
        };
        let trace = StreamTrace {
            conv,
            act,
            pool,
            drop,
            cell,
            hidden_shape: hseq.shape().to_vec(),
        };
        Ok((out, trace))
    }

    fn stream_backward(
        &self,
        stream: &Stream,
        trace: StreamTrace,
        d_out: &Tensor,
    ) -> Result<Stream> {
        let cfg = &self.config;
        let (n, steps, units) = (
            trace.hidden_shape[0],
            trace.hidden_shape[1],
            trace.hidden_shape[2],
        );
        let dh_seq = match cfg.stream_output {
            StreamOutput::Last => {
                let mut d = Tensor::zeros(&[n, steps, units]);
                let dd = d.data_mut();
                for i in 0..n {
                    let dst = (i * steps + steps - 1) * units;
                    dd[dst..dst + units].copy_from_slice(d_out.row(i));
                }
                d
            }
            StreamOutput::Flatten => d_out.clone().reshape(&[n, steps, units])?,
        };
        let (dy, cell) = stream.cell.backward(&trace.cell, &dh_seq)?;
        let dy = Dropout::new(cfg.dropout_stream)?.backward(&trace.drop, &dy)?;
        let dy = MaxPool1d::new(cfg.pool_size)?.backward(&trace.pool, &dy)?;
        let dy = cfg.conv_activation.backward(&trace.act, &dy)?;
        let (_, conv) = stream.conv.backward(&trace.conv, &dy)?;
        Ok(Stream { conv, cell })
    }

    /// Class probabilities for `x: [n, T, d]`. Eval mode never touches `rng`.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, ForwardTrace)> {
        let (_, steps, channels) = x.dims3("model forward")?;
        if steps != self.config.input_timesteps || channels != self.config.input_channels {
            return Err(Error::shape(
                "model forward",
                x.shape(),
                &[0, self.config.input_timesteps, self.config.input_channels],
            ));
        }
        let mut short = None;
        let mut long = None;
        let mut features: Option<Tensor> = None;
        if let Some(s) = &self.params.short {
            let (out, trace) = self.stream_forward(s, x, mode, rng)?;
            short = Some(trace);
            features = Some(out);
        }
        if let Some(s) = &self.params.long {
            let (out, trace) = self.stream_forward(s, x, mode, rng)?;
            long = Some(trace);
            features = Some(match features {
                Some(f) => Tensor::concat_cols(&f, &out)?,
                None => out,
            });
        }
        let mut y = features.ok_or_else(|| Error::Config("model has no streams".into()))?;
        let head_drop = Dropout::new(self.config.dropout_head)?;
        let last = self.params.head.len() - 1;
        let mut head = Vec::with_capacity(self.params.head.len());
        for (i, layer) in self.params.head.iter().enumerate() {
            let (z, dense) = layer.forward(&y)?;
            if i == last {
                head.push(HeadTrace {
                    dense,
                    act: None,
                    drop: None,
                });
                y = z;
                break;
            }
            let (a, act) = Activation::Relu.forward(&z);
            let (a, drop) = if i == 0 {
                let (a, d) = head_drop.forward(&a, mode, rng);
                (a, Some(d))
            } else {
                (a, None)
            };
            head.push(HeadTrace {
                dense,
                act: Some(act),
                drop,
            });
            y = a;
        }
        let probs = softmax(&y)?;
        let trace = ForwardTrace {
            version: self.version,
            short,
            long,
            head,
            probs: probs.clone(),
        };
        Ok((probs, trace))
    }

    /// Gradients of the loss for every parameter, given `dL/dlogits`.
    pub fn backward(&self, trace: ForwardTrace, dlogits: &Tensor) -> Result<ModelParams> {
        if trace.version != self.version {
            return Err(Error::InvalidArgument(
                "stale forward trace: parameters changed since the forward pass".into(),
            ));
        }
        if dlogits.shape() != trace.probs.shape() {
            return Err(Error::shape(
                "model backward",
                dlogits.shape(),
                trace.probs.shape(),
            ));
        }
        let head_drop = Dropout::new(self.config.dropout_head)?;
        let mut head_grads = Vec::with_capacity(self.params.head.len());
        let mut dy = dlogits.clone();
        for (layer, t) in self.params.head.iter().zip(trace.head).rev() {
            if let Some(d) = &t.drop {
                dy = head_drop.backward(d, &dy)?;
            }
            if let Some(a) = &t.act {
                dy = Activation::Relu.backward(a, &dy)?;
            }
            let (dx, g) = layer.backward(&t.dense, &dy)?;
            head_grads.push(g);
            dy = dx;
        }
        head_grads.reverse();

        let (d_short, d_long) = match (&trace.short, &trace.long) {
            (Some(_), Some(_)) => {
                let w = self.config.stream_width(self.config.gru_units);
                let (a, b) = dy.split_cols(w)?;
                (Some(a), Some(b))
            }
            (Some(_), None) => (Some(dy), None),
            (None, Some(_)) => (None, Some(dy)),
            (None, None) => return Err(Error::InvalidArgument("trace has no streams".into())),
        };
        let short = match (&self.params.short, trace.short, d_short) {
            (Some(s), Some(t), Some(d)) => Some(self.stream_backward(s, t, &d)?),
            _ => None,
        };
        let long = match (&self.params.long, trace.long, d_long) {
            (Some(s), Some(t), Some(d)) => Some(self.stream_backward(s, t, &d)?),
            _ => None,
        };
        Ok(ModelParams {
            short,
            long,
            head: head_grads,
        })
    }

    /// Eval-mode probabilities, computed in slices of `batch` samples.
    pub fn predict(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        let n = x.shape()[0];
        let batch = batch.max(1);
        let starts: Vec<usize> = (0..n).step_by(batch).collect();
        let parts = crate::parallel::map_ordered(&starts, |&s| {
            let idx: Vec<usize> = (s..(s + batch).min(n)).collect();
            let xb = x.select(&idx)?;
            // eval mode does not draw, so any generator will do
            let (p, _) = self.forward(&xb, Mode::Eval, &mut Rng::new(0))?;
            Ok(p)
        })?;
        let k = self.config.num_classes;
        let mut data = Vec::with_capacity(n * k);
        for p in parts {
            data.extend_from_slice(p.data());
        }
        Tensor::new(vec![n, k], data)
    }
}
