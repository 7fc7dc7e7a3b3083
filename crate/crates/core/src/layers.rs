//! Feed-forward layers with hand-derived backward passes.
//!
//! Every layer follows the same pattern: `forward` returns the output plus a
//! cache, and `backward` consumes that cache together with `dL/dy` to give
//! `dL/dx` and, for parametric layers, the parameter gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, relu, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer, `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
}

impl DenseParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (_, out) = weight.dims2("dense")?;
        if bias.shape() != [out] {
            return Err(Error::shape("dense", weight.shape(), bias.shape()));
        }
        Ok(DenseParams { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseParams {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let mut y = matmul(x, &self.weight)?;
        y.add_row_vector(&self.bias)?;
        Ok((y, DenseCache { x: x.clone() }))
    }

    /// Returns `dL/dx` and the parameter gradients (packed as `DenseParams`).
    pub fn backward(&self, cache: &DenseCache, dy: &Tensor) -> Result<(Tensor, DenseParams)> {
        let dx = matmul_nt(dy, &self.weight)?;
        let weight = matmul_tn(&cache.x, dy)?;
        let bias = dy.sum_rows()?;
        Ok((dx, DenseParams { weight, bias }))
    }
}

/// 1-D convolution, stride 1, valid padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dParams {
    /// `[kernel_size, in_channels, filters]`
    pub kernel: Tensor,
    /// `[filters]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    x: Tensor,
}

impl Conv1dParams {
    pub fn new(kernel: Tensor, bias: Tensor) -> Result<Self> {
        let (_, _, filters) = kernel.dims3("conv1d")?;
        if bias.shape() != [filters] {
            return Err(Error::shape("conv1d", kernel.shape(), bias.shape()));
        }
        Ok(Conv1dParams { kernel, bias })
    }

    pub fn zeros(kernel_size: usize, in_channels: usize, filters: usize) -> Self {
        Conv1dParams {
            kernel: Tensor::zeros(&[kernel_size, in_channels, filters]),
            bias: Tensor::zeros(&[filters]),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn filters(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn output_steps(&self, steps: usize) -> Result<usize> {
        let k = self.kernel_size();
        if steps < k {
            return Err(Error::InvalidArgument(format!(
                "conv1d: sequence length {steps} is shorter than kernel size {k}"
            )));
        }
        Ok(steps - k + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let (n, steps, c_in) = x.dims3("conv1d")?;
        if c_in != self.in_channels() {
            return Err(Error::shape("conv1d", x.shape(), self.kernel.shape()));
        }
        let k = self.kernel_size();
        let f = self.filters();
        let out_steps = self.output_steps(steps)?;
        let xd = x.data();
        let kd = self.kernel.data();
        let mut y = vec![0.0; n * out_steps * f];
        for i in 0..n {
            for t in 0..out_steps {
                let acc = &mut y[(i * out_steps + t) * f..(i * out_steps + t + 1) * f];
                for j in 0..k {
                    let x_row = &xd[(i * steps + t + j) * c_in..(i * steps + t + j + 1) * c_in];
                    for (c, &xv) in x_row.iter().enumerate() {
                        let k_row = &kd[(j * c_in + c) * f..(j * c_in + c + 1) * f];
                        for (a, &kv) in acc.iter_mut().zip(k_row) {
                            *a += xv * kv;
                        }
                    }
                }
                for (a, &b) in acc.iter_mut().zip(self.bias.data()) {
                    *a += b;
                }
            }
        }
        Ok((
            Tensor::new(vec![n, out_steps, f], y)?,
            Conv1dCache { x: x.clone() },
        ))
    }

    pub fn backward(&self, cache: &Conv1dCache, dy: &Tensor) -> Result<(Tensor, Conv1dParams)> {
        let (n, steps, c_in) = cache.x.dims3("conv1d backward")?;
        let k = self.kernel_size();
        let f = self.filters();
        let out_steps = self.output_steps(steps)?;
        if dy.shape() != [n, out_steps, f] {
            return Err(Error::shape(
                "conv1d backward",
                dy.shape(),
                &[n, out_steps, f],
            ));
        }
        let xd = cache.x.data();
        let kd = self.kernel.data();
        let dyd = dy.data();
        let mut dx = vec![0.0; n * steps * c_in];
        let mut dk = vec![0.0; k * c_in * f];
        let mut db = vec![0.0; f];
        for i in 0..n {
            for t in 0..out_steps {
                let g = &dyd[(i * out_steps + t) * f..(i * out_steps + t + 1) * f];
                for (b, &gv) in db.iter_mut().zip(g) {
                    *b += gv;
                }
                for j in 0..k {
                    let base = (i * steps + t + j) * c_in;
                    for c in 0..c_in {
                        let xv = xd[base + c];
                        let off = (j * c_in + c) * f;
                        let mut acc = 0.0;
                        for ff in 0..f {
                            dk[off + ff] += xv * g[ff];
                            acc += kd[off + ff] * g[ff];
                        }
                        dx[base + c] += acc;
                    }
                }
            }
        }
        Ok((
            Tensor::new(vec![n, steps, c_in], dx)?,
            Conv1dParams {
                kernel: Tensor::new(vec![k, c_in, f], dk)?,
                bias: Tensor::new(vec![f], db)?,
            },
        ))
    }
}

/// Non-overlapping max pooling over time; trailing remainder steps are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub pool: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// flat input index of the winner for every output element
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> Result<Self> {
        if pool == 0 {
            return Err(Error::InvalidArgument(
                "pool size must be at least 1".into(),
            ));
        }
        Ok(MaxPool1d { pool })
    }

    pub fn output_steps(&self, steps: usize) -> Result<usize> {
        if self.pool > steps {
            return Err(Error::InvalidArgument(format!(
                "maxpool: pool {} exceeds sequence length {steps}",
                self.pool
            )));
        }
        Ok(steps / self.pool)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let (n, steps, c) = x.dims3("maxpool1d")?;
        let out_steps = self.output_steps(steps)?;
        let xd = x.data();
        let mut y = Vec::with_capacity(n * out_steps * c);
        let mut argmax = Vec::with_capacity(n * out_steps * c);
        for i in 0..n {
            for t in 0..out_steps {
                for ch in 0..c {
                    let mut best = (i * steps + t * self.pool) * c + ch;
                    for w in 1..self.pool {
                        let idx = (i * steps + t * self.pool + w) * c + ch;
                        // strict comparison keeps the first index on ties
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    y.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        Ok((
            Tensor::new(vec![n, out_steps, c], y)?,
            MaxPoolCache {
                input_shape: x.shape().to_vec(),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &MaxPoolCache, dy: &Tensor) -> Result<Tensor> {
        if dy.len() != cache.argmax.len() {
            return Err(Error::shape(
                "maxpool1d backward",
                dy.shape(),
                &cache.input_shape,
            ));
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        let dxd = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
            dxd[idx] += g;
        }
        Ok(dx)
    }
}

/// Inverted dropout: kept values are scaled by `1/(1-rate)` at train time,
/// so evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate })
    }

    /// Draws from `rng` only in train mode with a non-zero rate.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, DropoutCache) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), DropoutCache { mask: None });
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.uniform() < keep { scale } else { 0.0 })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let y = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        (y, DropoutCache { mask: Some(mask) })
    }

    pub fn backward(&self, cache: &DropoutCache, dy: &Tensor) -> Result<Tensor> {
        match &cache.mask {
            None => Ok(dy.clone()),
            Some(mask) => {
                if mask.len() != dy.len() {
                    return Err(Error::InvalidArgument(
                        "dropout mask does not match gradient".into(),
                    ));
                }
                let data = dy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::new(dy.shape().to_vec(), data)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone)]
pub struct ActivationCache {
    x: Option<Tensor>,
}

impl Activation {
    pub fn forward(self, x: &Tensor) -> (Tensor, ActivationCache) {
        match self {
            Activation::Relu => (x.map(relu), ActivationCache { x: Some(x.clone()) }),
            Activation::Identity => (x.clone(), ActivationCache { x: None }),
        }
    }

    /// The ReLU subgradient at exactly 0 is taken as 0.
    pub fn backward(self, cache: &ActivationCache, dy: &Tensor) -> Result<Tensor> {
        match (self, &cache.x) {
            (Activation::Relu, Some(x)) => {
                dy.zip_map(x, "relu backward", |g, v| if v > 0.0 { g } else { 0.0 })
            }
            (Activation::Identity, _) => Ok(dy.clone()),
            (Activation::Relu, None) => Err(Error::InvalidArgument(
                "relu cache is missing its input".into(),
            )),
        }
    }
}
