//! Loss, optimizers and the training loop.

mod fit;

pub use fit::{evaluate, fit, EpochLog, FitObserver, NoopObserver, TrainConfig, TrainLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

/// Mean categorical cross-entropy and its gradient with respect to the
/// softmax logits, `(p - y) / n`.
pub fn cce_loss(probs: &Tensor, onehot: &Tensor) -> Result<(f64, Tensor)> {
    let n = probs.shape().first().copied().unwrap_or(0);
    cce_loss_scaled(probs, onehot, n)
}

/// Same as [`cce_loss`] but dividing by `denom` instead of the row count, so
/// per-chunk results of one minibatch add up to the minibatch values.
pub fn cce_loss_scaled(probs: &Tensor, onehot: &Tensor, denom: usize) -> Result<(f64, Tensor)> {
    if probs.shape() != onehot.shape() {
        return Err(Error::shape("cce_loss", probs.shape(), onehot.shape()));
    }
    let (_, k) = probs.dims2("cce_loss")?;
    if denom == 0 {
        return Err(Error::InvalidArgument(
            "cce_loss denominator must be positive".into(),
        ));
    }
    for row in onehot.data().chunks_exact(k) {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(
                "targets must be one-hot rows".into(),
            ));
        }
    }
    let scale = 1.0 / denom as f64;
    let mut loss = 0.0;
    for (p, y) in probs.data().iter().zip(onehot.data()) {
        if *y == 1.0 {
            loss -= p.max(PROB_FLOOR).ln();
        }
    }
    let grad = probs.zip_map(onehot, "cce_loss", |p, y| (p - y) * scale)?;
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Rmsprop {
        lr: f64,
        rho: f64,
        momentum: f64,
        epsilon: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerConfig {
    /// rho 0.9, no momentum, epsilon 1e-7.
    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig::Rmsprop {
            lr,
            rho: 0.9,
            momentum: 0.0,
            epsilon: 1e-7,
        }
    }

    /// beta 0.9 / 0.999, epsilon 1e-7.
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Rmsprop {
                lr,
                rho,
                momentum,
                epsilon,
            } => {
                lr > 0.0
                    && (0.0..1.0).contains(&rho)
                    && (0.0..1.0).contains(&momentum)
                    && epsilon > 0.0
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => {
                lr > 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && epsilon > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Accumulator for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub s: Tensor,
    /// velocity, only touched when momentum is non-zero
    pub velocity: Tensor,
}

impl RmsPropState {
    pub fn new(like: &Tensor) -> Self {
        RmsPropState {
            s: Tensor::zeros_like(like),
            velocity: Tensor::zeros_like(like),
        }
    }
}

/// Moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Tensor) -> Self {
        AdamState {
            m: Tensor::zeros_like(like),
            v: Tensor::zeros_like(like),
            t: 0,
        }
    }
}

fn check_shapes(op: &'static str, param: &Tensor, grad: &Tensor, state: &Tensor) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape(op, param.shape(), grad.shape()));
    }
    if param.shape() != state.shape() {
        return Err(Error::shape(op, param.shape(), state.shape()));
    }
    Ok(())
}

/// `s ← ρs + (1−ρ)g²`, `param ← param − lr·g / (√s + ε)` (plus a velocity
/// term when momentum is non-zero).
pub fn rmsprop_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut RmsPropState,
    lr: f64,
    rho: f64,
    momentum: f64,
    epsilon: f64,
) -> Result<()> {
    check_shapes("rmsprop_step", param, grad, &state.s)?;
    let g = grad.data();
    let s = state.s.data_mut();
    let vel = state.velocity.data_mut();
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        s[i] = rho * s[i] + (1.0 - rho) * g[i] * g[i];
        let step = lr * g[i] / (s[i].sqrt() + epsilon);
        if momentum == 0.0 {
            *p -= step;
        } else {
            vel[i] = momentum * vel[i] + step;
            *p -= vel[i];
        }
    }
    Ok(())
}

/// Bias-corrected Adam: `param ← param − lr·m̂ / (√v̂ + ε)`.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    check_shapes("adam_step", param, grad, &state.m)?;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let g = grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Slots {
    Rmsprop(Vec<RmsPropState>),
    Adam(Vec<AdamState>),
}

/// Optimizer with one state slot per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Slots,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        let tensors = params.named_tensors();
        let slots = match config {
            OptimizerConfig::Rmsprop { .. } => {
                Slots::Rmsprop(tensors.iter().map(|(_, t)| RmsPropState::new(t)).collect())
            }
            OptimizerConfig::Adam { .. } => {
                Slots::Adam(tensors.iter().map(|(_, t)| AdamState::new(t)).collect())
            }
        };
        Ok(Optimizer { config, slots })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn slot_count(&self) -> usize {
        match &self.slots {
            Slots::Rmsprop(s) => s.len(),
            Slots::Adam(s) => s.len(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let grads = grads.named_tensors();
        let params = params.tensors_mut();
        if params.len() != self.slot_count() || grads.len() != self.slot_count() {
            return Err(Error::InvalidArgument(format!(
                "optimizer has {} slots but got {} parameters and {} gradients",
                self.slot_count(),
                params.len(),
                grads.len()
            )));
        }
        match (&mut self.slots, self.config) {
            (
                Slots::Rmsprop(slots),
                OptimizerConfig::Rmsprop {
                    lr,
                    rho,
                    momentum,
                    epsilon,
                },
            ) => {
                for ((p, (_, g)), s) in params.into_iter().zip(grads).zip(slots) {
                    rmsprop_step(p, g, s, lr, rho, momentum, epsilon)?;
                }
            }
            (
                Slots::Adam(slots),
                OptimizerConfig::Adam {
                    lr,
                    beta1,
                    beta2,
                    epsilon,
                },
            ) => {
                for ((p, (_, g)), s) in params.into_iter().zip(grads).zip(slots) {
                    adam_step(p, g, s, lr, beta1, beta2, epsilon)?;
                }
            }
            _ => unreachable!("slots are built from the config"),
        }
        Ok(())
    }
}
