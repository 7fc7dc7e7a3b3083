//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each check builds a small random instance, reduces the component's output
//! to a scalar with fixed random weights (or the cross-entropy loss for the
//! full model) and compares the analytic gradient of every input and
//! parameter tensor with `(f(θ + h) − f(θ − h)) / 2h`, `h = 1e-5`.
//!
//! The error for one element is `|a − n| / max(|a|, |n|, 1e-5)`: relative
//! where gradients are sizeable, absolute for entries that are essentially
//! zero and would otherwise turn rounding noise into large ratios.

use serde::Serialize;

use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::layers::{Activation, Conv1dParams, DenseParams, Dropout, MaxPool1d, Mode};
use crate::model::{ModelConfig, StreamOutput, TemporalAugmenter};
use crate::optim::cce_loss;
use crate::recurrent::{CellKind, InitialState, Recurrent};
use crate::tensor::{softmax, Rng, Tensor};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const ERROR_FLOOR: f64 = 1e-5;

/// Names accepted by [`run`]'s module filter.
pub const COMPONENTS: [&str; 9] = [
    "dense", "conv1d", "maxpool", "dropout", "relu", "cce", "lstm", "gru", "model",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub component: String,
    pub max_rel_error: f64,
    pub elements: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn element_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(ERROR_FLOOR)
}

/// Compares `analytic[i]` with the numeric gradient of `f` at `point[i]`.
fn compare(
    point: &[Tensor],
    analytic: &[Tensor],
    f: &dyn Fn(&[Tensor]) -> Result<f64>,
    corrupt: bool,
) -> Result<(f64, usize)> {
    let mut work = point.to_vec();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (ti, grad) in analytic.iter().enumerate() {
        if grad.shape() != point[ti].shape() {
            return Err(Error::shape("gradcheck", grad.shape(), point[ti].shape()));
        }
        for j in 0..grad.len() {
            let orig = work[ti].data()[j];
            work[ti].data_mut()[j] = orig + STEP;
            let up = f(&work)?;
            work[ti].data_mut()[j] = orig - STEP;
            let down = f(&work)?;
            work[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let mut a = grad.data()[j];
            if corrupt {
                a = a * 1.01 + 1e-3;
            }
            worst = worst.max(element_error(a, numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn randn(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.normal() * scale).collect(),
    )
    .expect("non-empty shape")
}

fn weighted_sum(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn check_dense(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let x = randn(&[3, 4], 1.0, rng);
    let layer = DenseParams::new(randn(&[4, 5], 0.5, rng), randn(&[5], 0.5, rng))?;
    let w = randn(&[3, 5], 1.0, rng);
    let (_, cache) = layer.forward(&x)?;
    let (dx, g) = layer.backward(&cache, &w)?;
    let f = |p: &[Tensor]| -> Result<f64> {
        let l = DenseParams::new(p[1].clone(), p[2].clone())?;
        Ok(weighted_sum(&l.forward(&p[0])?.0, &w))
    };
    compare(
        &[x, layer.weight, layer.bias],
        &[dx, g.weight, g.bias],
        &f,
        corrupt,
    )
}

fn check_conv(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let x = randn(&[2, 7, 3], 1.0, rng);
    let layer = Conv1dParams::new(randn(&[3, 3, 4], 0.5, rng), randn(&[4], 0.5, rng))?;
    let w = randn(&[2, 5, 4], 1.0, rng);
    let (_, cache) = layer.forward(&x)?;
    let (dx, g) = layer.backward(&cache, &w)?;
    let f = |p: &[Tensor]| -> Result<f64> {
        let l = Conv1dParams::new(p[1].clone(), p[2].clone())?;
        Ok(weighted_sum(&l.forward(&p[0])?.0, &w))
    };
    compare(
        &[x, layer.kernel, layer.bias],
        &[dx, g.kernel, g.bias],
        &f,
        corrupt,
    )
}

fn check_maxpool(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    // distinct values at least 0.01 apart keep every window's argmax stable
    let n = 2 * 9 * 2;
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    rng.shuffle(&mut values);
    let x = Tensor::new(vec![2, 9, 2], values)?;
    let pool = MaxPool1d::new(2)?;
    let (y, cache) = pool.forward(&x)?;
    let w = randn(y.shape(), 1.0, rng);
    let dx = pool.backward(&cache, &w)?;
    let f = |p: &[Tensor]| -> Result<f64> { Ok(weighted_sum(&pool.forward(&p[0])?.0, &w)) };
    compare(&[x], &[dx], &f, corrupt)
}

fn check_dropout(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let x = randn(&[4, 6], 1.0, rng);
    let drop = Dropout::new(0.4)?;
    let mask_rng = rng.derive(&[7]);
    let (y, cache) = drop.forward(&x, Mode::Train, &mut mask_rng.clone());
    let w = randn(y.shape(), 1.0, rng);
    let dx = drop.backward(&cache, &w)?;
    let f = |p: &[Tensor]| -> Result<f64> {
        Ok(weighted_sum(
            &drop.forward(&p[0], Mode::Train, &mut mask_rng.clone()).0,
            &w,
        ))
    };
    compare(&[x], &[dx], &f, corrupt)
}

fn check_relu(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    // keep inputs outside a 1e-3 band around the kink
    let x = randn(&[5, 4], 1.0, rng).map(|v| if v.abs() < 1e-3 { v.signum() * 0.5 } else { v });
    let (y, cache) = Activation::Relu.forward(&x);
    let w = randn(y.shape(), 1.0, rng);
    let dx = Activation::Relu.backward(&cache, &w)?;
    let f =
        |p: &[Tensor]| -> Result<f64> { Ok(weighted_sum(&Activation::Relu.forward(&p[0]).0, &w)) };
    compare(&[x], &[dx], &f, corrupt)
}

fn check_cce(rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let logits = randn(&[4, 5], 1.5, rng);
    let labels: Vec<usize> = (0..4).map(|_| rng.below(5)).collect();
    let y = one_hot(&labels, 5)?;
    let (_, g) = cce_loss(&softmax(&logits)?, &y)?;
    let f = |p: &[Tensor]| -> Result<f64> { Ok(cce_loss(&softmax(&p[0])?, &y)?.0) };
    compare(&[logits], &[g], &f, corrupt)
}

fn check_cell(kind: CellKind, steps: usize, rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let (d, u) = (3, 4);
    let mut cell = Recurrent::zeros(kind, d, u);
    for t in cell.tensors_mut() {
        *t = randn(t.shape(), 0.5, rng);
    }
    let x = randn(&[2, steps, d], 1.0, rng);
    let w = randn(&[2, steps, u], 1.0, rng);
    let (_, cache) = cell.forward(&x, &InitialState::default())?;
    let (dx, grads) = cell.backward(&cache, &w)?;

    let mut point = vec![x];
    point.extend(cell.named_tensors().into_iter().map(|(_, t)| t.clone()));
    let mut analytic = vec![dx];
    analytic.extend(grads.named_tensors().into_iter().map(|(_, t)| t.clone()));
    let f = |p: &[Tensor]| -> Result<f64> {
        let mut c = Recurrent::zeros(kind, d, u);
        for (slot, v) in c.tensors_mut().into_iter().zip(&p[1..]) {
            *slot = v.clone();
        }
        Ok(weighted_sum(
            &c.forward(&p[0], &InitialState::default())?.0,
            &w,
        ))
    };
    compare(&point, &analytic, &f, corrupt)
}

fn check_model(output: StreamOutput, rng: &mut Rng, corrupt: bool) -> Result<(f64, usize)> {
    let cfg = ModelConfig {
        conv_filters: 3,
        conv_kernel: 2,
        lstm_units: 2,
        gru_units: 3,
        dense_sizes: vec![4, 3],
        dropout_stream: 0.3,
        dropout_head: 0.3,
        stream_output: output,
        ..ModelConfig::new(7, 2, 3)
    };
    let mut model = TemporalAugmenter::build(cfg, rng)?;
    // non-zero biases so every bias path carries gradient
    for t in model.params_mut().tensors_mut() {
        if t.ndim() == 1 {
            *t = randn(t.shape(), 0.3, rng);
        }
    }
    let x = randn(&[3, 7, 2], 1.0, rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.below(3)).collect();
    let y = one_hot(&labels, 3)?;
    let drop_rng = rng.derive(&[11]);

    let (probs, trace) = model.forward(&x, Mode::Train, &mut drop_rng.clone())?;
    let (_, dlogits) = cce_loss(&probs, &y)?;
    let grads = model.backward(trace, &dlogits)?;

    let point: Vec<Tensor> = model
        .params()
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    let analytic: Vec<Tensor> = grads
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    let f = |p: &[Tensor]| -> Result<f64> {
        let mut m = model.clone();
        for (slot, v) in m.params_mut().tensors_mut().into_iter().zip(p) {
            *slot = v.clone();
        }
        let (probs, _) = m.forward(&x, Mode::Train, &mut drop_rng.clone())?;
        Ok(cce_loss(&probs, &y)?.0)
    };
    compare(&point, &analytic, &f, corrupt)
}

/// Runs the checks whose component name equals `module` (all when `None`).
/// `corrupt` perturbs every analytic gradient, to prove the harness can fail.
pub fn run(module: Option<&str>, seed: u64, corrupt: bool) -> Result<Vec<CheckResult>> {
    if let Some(m) = module {
        if !COMPONENTS.contains(&m) {
            return Err(Error::InvalidArgument(format!(
                "unknown module {m:?}; expected one of {}",
                COMPONENTS.join(", ")
            )));
        }
    }
    let base = Rng::new(seed);
    let mut results = Vec::new();
    for (i, &name) in COMPONENTS.iter().enumerate() {
        if module.is_some_and(|m| m != name) {
            continue;
        }
        let mut rng = base.derive(&[i as u64]);
        let mut push = |label: String, (err, elements): (f64, usize)| {
            results.push(CheckResult {
                component: label,
                max_rel_error: err,
                elements,
            })
        };
        match name {
            "dense" => push(name.into(), check_dense(&mut rng, corrupt)?),
            "conv1d" => push(name.into(), check_conv(&mut rng, corrupt)?),
            "maxpool" => push(name.into(), check_maxpool(&mut rng, corrupt)?),
            "dropout" => push(name.into(), check_dropout(&mut rng, corrupt)?),
            "relu" => push(name.into(), check_relu(&mut rng, corrupt)?),
            "cce" => push(name.into(), check_cce(&mut rng, corrupt)?),
            "lstm" | "gru" => {
                let kind = if name == "lstm" {
                    CellKind::Lstm
                } else {
                    CellKind::Gru
                };
                for steps in [1, 2, 5] {
                    push(
                        format!("{name} T={steps}"),
                        check_cell(kind, steps, &mut rng, corrupt)?,
                    );
                }
            }
            "model" => {
                push(
                    "model (last state)".into(),
                    check_model(StreamOutput::Last, &mut rng, corrupt)?,
                );
                push(
                    "model (flattened)".into(),
                    check_model(StreamOutput::Flatten, &mut rng, corrupt)?,
                );
            }
            _ => unreachable!("filtered by COMPONENTS"),
        }
    }
    Ok(results)
}
