//! LSTM and GRU cells with backpropagation through time.
//!
//! Cell equations (row-vector convention, `⊙` elementwise):
//!
//! ```text
//! LSTM  f = σ(x·W_f + h·U_f + b_f)    i = σ(x·W_i + h·U_i + b_i)
//!       g = tanh(x·W_g + h·U_g + b_g)  o = σ(x·W_o + h·U_o + b_o)
//!       c' = f⊙c + i⊙g                 h' = o⊙tanh(c')
//!
//! GRU   z = σ(x·W_z + h·U_z + b_z)    r = σ(x·W_r + h·U_r + b_r)
//!       h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h)
//!       h' = z⊙h + (1−z)⊙h̃
//! ```
//!
//! The GRU update gate weights the *previous* state, so `z → 1` freezes `h`.
//! Sequences start from `h₀ = c₀ = 0` unless an initial state is supplied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    init_glorot_uniform, init_orthogonal, matmul, matmul_nt, matmul_tn, sigmoid, Rng, Tensor,
};

const LSTM_GATES: [&str; 4] = ["f", "i", "g", "o"];
const GRU_GATES: [&str; 3] = ["z", "r", "h"];

const F: usize = 0;
const I: usize = 1;
const G: usize = 2;
const O: usize = 3;

const Z: usize = 0;
const R: usize = 1;
const H: usize = 2;

/// `x·W + h·U + b` for one gate.
fn gate_preactivation(
    x: &Tensor,
    h: &Tensor,
    w: &Tensor,
    u: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let mut a = matmul(x, w)?;
    a.add_assign(&matmul(h, u)?)?;
    a.add_row_vector(b)?;
    Ok(a)
}

fn check_input(x: &Tensor, w: &Tensor, op: &'static str) -> Result<()> {
    let (_, d) = x.dims2(op)?;
    if d != w.shape()[0] {
        return Err(Error::shape(op, x.shape(), w.shape()));
    }
    Ok(())
}

fn check_state(h: &Tensor, n: usize, units: usize, op: &'static str) -> Result<()> {
    if h.shape() != [n, units] {
        return Err(Error::shape(op, h.shape(), &[n, units]));
    }
    Ok(())
}

/// Accumulates the gate's parameter gradients and returns its contributions to `dx` and `dh`.
#[allow(clippy::too_many_arguments)]
fn gate_backward(
    da: &Tensor,
    x: &Tensor,
    h_in: &Tensor,
    w: &Tensor,
    u: &Tensor,
    dw: &mut Tensor,
    du: &mut Tensor,
    db: &mut Tensor,
) -> Result<(Tensor, Tensor)> {
    dw.add_assign(&matmul_tn(x, da)?)?;
    du.add_assign(&matmul_tn(h_in, da)?)?;
    db.add_assign(&da.sum_rows()?)?;
    Ok((matmul_nt(da, w)?, matmul_nt(da, u)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// input weights `[d, u]`, gates ordered f, i, g, o
    pub w: [Tensor; 4],
    /// recurrent weights `[u, u]`
    pub u: [Tensor; 4],
    /// biases `[u]`
    pub b: [Tensor; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(n: usize, units: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[n, units]),
            c: Tensor::zeros(&[n, units]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    f: Tensor,
    i: Tensor,
    g: Tensor,
    o: Tensor,
    tanh_c: Tensor,
}

impl LstmStepCache {
    /// Gate activations `(f, i, g, o)` of this step.
    pub fn gates(&self) -> [&Tensor; 4] {
        [&self.f, &self.i, &self.g, &self.o]
    }
}

impl LstmParams {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        LstmParams {
            w: std::array::from_fn(|_| Tensor::zeros(&[inputs, units])),
            u: std::array::from_fn(|_| Tensor::zeros(&[units, units])),
            b: std::array::from_fn(|_| Tensor::zeros(&[units])),
        }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights, zero biases.
    pub fn init(inputs: usize, units: usize, rng: &mut Rng) -> Result<Self> {
        let mut p = LstmParams::zeros(inputs, units);
        for g in 0..4 {
            p.w[g] = init_glorot_uniform(inputs, units, &[inputs, units], rng)?;
            p.u[g] = init_orthogonal(units, units, rng)?;
        }
        Ok(p)
    }

    pub fn inputs(&self) -> usize {
        self.w[0].shape()[0]
    }

    pub fn units(&self) -> usize {
        self.w[0].shape()[1]
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(12);
        for (g, name) in LSTM_GATES.iter().enumerate() {
            out.push((format!("W_{name}"), &self.w[g]));
            out.push((format!("U_{name}"), &self.u[g]));
            out.push((format!("b_{name}"), &self.b[g]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let LstmParams { w, u, b } = self;
        let mut out = Vec::with_capacity(12);
        for ((w, u), b) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push(w);
            out.push(u);
            out.push(b);
        }
        out
    }

    pub fn step(&self, x: &Tensor, state: &LstmState) -> Result<(LstmState, LstmStepCache)> {
        check_input(x, &self.w[0], "lstm step")?;
        let n = x.shape()[0];
        check_state(&state.h, n, self.units(), "lstm step")?;
        check_state(&state.c, n, self.units(), "lstm step")?;
        let pre = |g: usize| gate_preactivation(x, &state.h, &self.w[g], &self.u[g], &self.b[g]);
        let f = pre(F)?.map(sigmoid);
        let i = pre(I)?.map(sigmoid);
        let g = pre(G)?.map(f64::tanh);
        let o = pre(O)?.map(sigmoid);
        let mut c = f.zip_map(&state.c, "lstm", |a, b| a * b)?;
        c.add_assign(&i.zip_map(&g, "lstm", |a, b| a * b)?)?;
        let tanh_c = c.map(f64::tanh);
        let h = o.zip_map(&tanh_c, "lstm", |a, b| a * b)?;
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            f,
            i,
            g,
            o,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Backward through one step. `dh`, `dc` are gradients w.r.t. the step's
    /// outputs; returns `(dx, dh_prev, dc_prev)` and accumulates into `grads`.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh: &Tensor,
        dc: &Tensor,
        grads: &mut LstmParams,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let n = cache.x.shape()[0];
        let u = self.units();
        check_state(dh, n, u, "lstm step backward")?;
        check_state(dc, n, u, "lstm step backward")?;
        let len = n * u;
        let (mut da_f, mut da_i, mut da_g, mut da_o) = (
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
        );
        let mut dc_prev = vec![0.0; len];
        let (f, i, g, o) = (
            cache.f.data(),
            cache.i.data(),
            cache.g.data(),
            cache.o.data(),
        );
        let (tc, cp) = (cache.tanh_c.data(), cache.c_prev.data());
        for k in 0..len {
            let dhk = dh.data()[k];
            let d_o = dhk * tc[k];
            let dct = dc.data()[k] + dhk * o[k] * (1.0 - tc[k] * tc[k]);
            da_f[k] = dct * cp[k] * f[k] * (1.0 - f[k]);
            da_i[k] = dct * g[k] * i[k] * (1.0 - i[k]);
            da_g[k] = dct * i[k] * (1.0 - g[k] * g[k]);
            da_o[k] = d_o * o[k] * (1.0 - o[k]);
            dc_prev[k] = dct * f[k];
        }
        let mut dx = Tensor::zeros(cache.x.shape());
        let mut dh_prev = Tensor::zeros(&[n, u]);
        for (gate, da) in [(F, da_f), (I, da_i), (G, da_g), (O, da_o)] {
            let da = Tensor::new(vec![n, u], da)?;
            let LstmParams { w, u: uu, b } = grads;
            let (dxg, dhg) = gate_backward(
                &da,
                &cache.x,
                &cache.h_prev,
                &self.w[gate],
                &self.u[gate],
                &mut w[gate],
                &mut uu[gate],
                &mut b[gate],
            )?;
            dx.add_assign(&dxg)?;
            dh_prev.add_assign(&dhg)?;
        }
        Ok((dx, dh_prev, Tensor::new(vec![n, u], dc_prev)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    /// input weights `[d, u]`, ordered z, r, h
    pub w: [Tensor; 3],
    /// recurrent weights `[u, u]`
    pub u: [Tensor; 3],
    /// biases `[u]`
    pub b: [Tensor; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Tensor,
}

impl GruState {
    pub fn zeros(n: usize, units: usize) -> Self {
        GruState {
            h: Tensor::zeros(&[n, units]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Tensor,
    h_prev: Tensor,
    z: Tensor,
    r: Tensor,
    rh: Tensor,
    h_tilde: Tensor,
}

impl GruStepCache {
    /// `(z, r, h̃)` of this step.
    pub fn gates(&self) -> [&Tensor; 3] {
        [&self.z, &self.r, &self.h_tilde]
    }
}

impl GruParams {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        GruParams {
            w: std::array::from_fn(|_| Tensor::zeros(&[inputs, units])),
            u: std::array::from_fn(|_| Tensor::zeros(&[units, units])),
            b: std::array::from_fn(|_| Tensor::zeros(&[units])),
        }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights, zero biases.
    pub fn init(inputs: usize, units: usize, rng: &mut Rng) -> Result<Self> {
        let mut p = GruParams::zeros(inputs, units);
        for g in 0..3 {
            p.w[g] = init_glorot_uniform(inputs, units, &[inputs, units], rng)?;
            p.u[g] = init_orthogonal(units, units, rng)?;
        }
        Ok(p)
    }

    pub fn inputs(&self) -> usize {
        self.w[0].shape()[0]
    }

    pub fn units(&self) -> usize {
        self.w[0].shape()[1]
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(9);
        for (g, name) in GRU_GATES.iter().enumerate() {
            out.push((format!("W_{name}"), &self.w[g]));
            out.push((format!("U_{name}"), &self.u[g]));
            out.push((format!("b_{name}"), &self.b[g]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let GruParams { w, u, b } = self;
        let mut out = Vec::with_capacity(9);
        for ((w, u), b) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push(w);
            out.push(u);
            out.push(b);
        }
        out
    }

    pub fn step(&self, x: &Tensor, state: &GruState) -> Result<(GruState, GruStepCache)> {
        check_input(x, &self.w[0], "gru step")?;
        let n = x.shape()[0];
        check_state(&state.h, n, self.units(), "gru step")?;
        let h = &state.h;
        let z = gate_preactivation(x, h, &self.w[Z], &self.u[Z], &self.b[Z])?.map(sigmoid);
        let r = gate_preactivation(x, h, &self.w[R], &self.u[R], &self.b[R])?.map(sigmoid);
        let rh = r.zip_map(h, "gru", |a, b| a * b)?;
        let h_tilde =
            gate_preactivation(x, &rh, &self.w[H], &self.u[H], &self.b[H])?.map(f64::tanh);
        let data = z
            .data()
            .iter()
            .zip(h.data())
            .zip(h_tilde.data())
            .map(|((&zv, &hv), &tv)| zv * hv + (1.0 - zv) * tv)
            .collect();
        let h_next = Tensor::new(h.shape().to_vec(), data)?;
        let cache = GruStepCache {
            x: x.clone(),
            h_prev: h.clone(),
            z,
            r,
            rh,
            h_tilde,
        };
        Ok((GruState { h: h_next }, cache))
    }

    /// Backward through one step; returns `(dx, dh_prev)` and accumulates into `grads`.
    pub fn step_backward(
        &self,
        cache: &GruStepCache,
        dh: &Tensor,
        grads: &mut GruParams,
    ) -> Result<(Tensor, Tensor)> {
        let n = cache.x.shape()[0];
        let u = self.units();
        check_state(dh, n, u, "gru step backward")?;
        let len = n * u;
        let (z, ht, hp) = (cache.z.data(), cache.h_tilde.data(), cache.h_prev.data());
        let mut da_z = vec![0.0; len];
        let mut da_h = vec![0.0; len];
        let mut dh_prev = vec![0.0; len];
        for k in 0..len {
            let g = dh.data()[k];
            da_z[k] = g * (hp[k] - ht[k]) * z[k] * (1.0 - z[k]);
            da_h[k] = g * (1.0 - z[k]) * (1.0 - ht[k] * ht[k]);
            dh_prev[k] = g * z[k];
        }
        let da_h = Tensor::new(vec![n, u], da_h)?;
        let GruParams {
            w: gw,
            u: gu,
            b: gb,
        } = grads;

        // candidate: its recurrent input is r⊙h
        let (mut dx, d_rh) = gate_backward(
            &da_h, &cache.x, &cache.rh, &self.w[H], &self.u[H], &mut gw[H], &mut gu[H], &mut gb[H],
        )?;
        let r = cache.r.data();
        let mut da_r = vec![0.0; len];
        for k in 0..len {
            let drh = d_rh.data()[k];
            da_r[k] = drh * hp[k] * r[k] * (1.0 - r[k]);
            dh_prev[k] += drh * r[k];
        }
        let mut dh_prev = Tensor::new(vec![n, u], dh_prev)?;
        for (gate, da) in [(Z, da_z), (R, da_r)] {
            let da = Tensor::new(vec![n, u], da)?;
            let (dxg, dhg) = gate_backward(
                &da,
                &cache.x,
                &cache.h_prev,
                &self.w[gate],
                &self.u[gate],
                &mut gw[gate],
                &mut gu[gate],
                &mut gb[gate],
            )?;
            dx.add_assign(&dxg)?;
            dh_prev.add_assign(&dhg)?;
        }
        Ok((dx, dh_prev))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

/// Parameters of either cell, unrolled over whole sequences.
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    Lstm(LstmParams),
    Gru(GruParams),
}

#[derive(Debug, Clone)]
pub enum SequenceCache {
    Lstm {
        steps: Vec<LstmStepCache>,
        last: LstmState,
    },
    Gru {
        steps: Vec<GruStepCache>,
        last: GruState,
    },
}

impl SequenceCache {
    pub fn len(&self) -> usize {
        match self {
            SequenceCache::Lstm { steps, .. } => steps.len(),
            SequenceCache::Gru { steps, .. } => steps.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Memory cell after the last step (LSTM only).
    pub fn last_cell(&self) -> Option<&Tensor> {
        match self {
            SequenceCache::Lstm { last, .. } => Some(&last.c),
            SequenceCache::Gru { .. } => None,
        }
    }

    pub fn lstm_steps(&self) -> Option<&[LstmStepCache]> {
        match self {
            SequenceCache::Lstm { steps, .. } => Some(steps),
            SequenceCache::Gru { .. } => None,
        }
    }

    pub fn gru_steps(&self) -> Option<&[GruStepCache]> {
        match self {
            SequenceCache::Gru { steps, .. } => Some(steps),
            SequenceCache::Lstm { .. } => None,
        }
    }
}

/// Initial state for [`Recurrent::forward`]; `None` means all zeros.
#[derive(Debug, Clone, Default)]
pub struct InitialState {
    pub h: Option<Tensor>,
    pub c: Option<Tensor>,
}

impl Recurrent {
    pub fn init(kind: CellKind, inputs: usize, units: usize, rng: &mut Rng) -> Result<Self> {
        Ok(match kind {
            CellKind::Lstm => Recurrent::Lstm(LstmParams::init(inputs, units, rng)?),
            CellKind::Gru => Recurrent::Gru(GruParams::init(inputs, units, rng)?),
        })
    }

    pub fn zeros(kind: CellKind, inputs: usize, units: usize) -> Self {
        match kind {
            CellKind::Lstm => Recurrent::Lstm(LstmParams::zeros(inputs, units)),
            CellKind::Gru => Recurrent::Gru(GruParams::zeros(inputs, units)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Recurrent::Lstm(_) => CellKind::Lstm,
            Recurrent::Gru(_) => CellKind::Gru,
        }
    }

    pub fn units(&self) -> usize {
        match self {
            Recurrent::Lstm(p) => p.units(),
            Recurrent::Gru(p) => p.units(),
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Recurrent::Lstm(p) => p.inputs(),
            Recurrent::Gru(p) => p.inputs(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        match self {
            Recurrent::Lstm(p) => p.named_tensors(),
            Recurrent::Gru(p) => p.named_tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Recurrent::Lstm(p) => p.tensors_mut(),
            Recurrent::Gru(p) => p.tensors_mut(),
        }
    }

    /// Runs the cell over `x: [n, T, d]`; returns every hidden state as `[n, T, u]`.
    pub fn forward(&self, x: &Tensor, init: &InitialState) -> Result<(Tensor, SequenceCache)> {
        let (n, steps, _) = x.dims3("recurrent")?;
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "cannot unroll an empty sequence".into(),
            ));
        }
        let units = self.units();
        let h0 = init.h.clone().unwrap_or_else(|| Tensor::zeros(&[n, units]));
        let mut hs = Vec::with_capacity(steps);
        match self {
            Recurrent::Lstm(p) => {
                let c0 = init.c.clone().unwrap_or_else(|| Tensor::zeros(&[n, units]));
                let mut state = LstmState { h: h0, c: c0 };
                let mut caches = Vec::with_capacity(steps);
                for t in 0..steps {
                    let (next, cache) = p.step(&x.timestep(t)?, &state)?;
                    hs.push(next.h.clone());
                    caches.push(cache);
                    state = next;
                }
                Ok((
                    Tensor::stack_timesteps(&hs)?,
                    SequenceCache::Lstm {
                        steps: caches,
                        last: state,
                    },
                ))
            }
            Recurrent::Gru(p) => {
                let mut state = GruState { h: h0 };
                let mut caches = Vec::with_capacity(steps);
                for t in 0..steps {
                    let (next, cache) = p.step(&x.timestep(t)?, &state)?;
                    hs.push(next.h.clone());
                    caches.push(cache);
                    state = next;
                }
                Ok((
                    Tensor::stack_timesteps(&hs)?,
                    SequenceCache::Gru {
                        steps: caches,
                        last: state,
                    },
                ))
            }
        }
    }

    /// Backpropagation through time. `dh_seq: [n, T, u]` holds the loss
    /// gradient w.r.t. every emitted hidden state (zeros where unused).
    /// Returns `dL/dx` and the parameter gradients.
    pub fn backward(&self, cache: &SequenceCache, dh_seq: &Tensor) -> Result<(Tensor, Recurrent)> {
        let (n, steps, u) = dh_seq.dims3("recurrent backward")?;
        if steps != cache.len() || u != self.units() {
            return Err(Error::InvalidArgument(format!(
                "recurrent backward: gradient {:?} does not match a {}-step cache with {} units",
                dh_seq.shape(),
                cache.len(),
                self.units()
            )));
        }
        let mut dxs = Vec::with_capacity(steps);
        match (self, cache) {
            (Recurrent::Lstm(p), SequenceCache::Lstm { steps: caches, .. }) => {
                let mut grads = LstmParams::zeros(p.inputs(), u);
                let mut dh_next = Tensor::zeros(&[n, u]);
                let mut dc_next = Tensor::zeros(&[n, u]);
                for t in (0..steps).rev() {
                    let mut dh = dh_seq.timestep(t)?;
                    dh.add_assign(&dh_next)?;
                    let (dx, dh_prev, dc_prev) =
                        p.step_backward(&caches[t], &dh, &dc_next, &mut grads)?;
                    dxs.push(dx);
                    dh_next = dh_prev;
                    dc_next = dc_prev;
                }
                dxs.reverse();
                Ok((Tensor::stack_timesteps(&dxs)?, Recurrent::Lstm(grads)))
            }
            (Recurrent::Gru(p), SequenceCache::Gru { steps: caches, .. }) => {
                let mut grads = GruParams::zeros(p.inputs(), u);
                let mut dh_next = Tensor::zeros(&[n, u]);
                for t in (0..steps).rev() {
                    let mut dh = dh_seq.timestep(t)?;
                    dh.add_assign(&dh_next)?;
                    let (dx, dh_prev) = p.step_backward(&caches[t], &dh, &mut grads)?;
                    dxs.push(dx);
                    dh_next = dh_prev;
                }
                dxs.reverse();
                Ok((Tensor::stack_timesteps(&dxs)?, Recurrent::Gru(grads)))
            }
            _ => Err(Error::InvalidArgument(
                "recurrent cache belongs to a different cell type".into(),
            )),
        }
    }
}

/// Hidden state at the final timestep of `[n, T, u]`.
pub fn last_hidden(hseq: &Tensor) -> Result<Tensor> {
    let (_, steps, _) = hseq.dims3("last_hidden")?;
    hseq.timestep(steps - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1, 1], vec![v]).unwrap()
    }

    #[test]
    fn lstm_zero_params_hand_calculation() {
        let p = LstmParams::zeros(1, 1);
        let state = LstmState {
            h: scalar(0.0),
            c: scalar(0.8),
        };
        let (next, _) = p.step(&scalar(0.3), &state).unwrap();
        // all gates 0.5, candidate tanh(0) = 0: c' = 0.5·0.8, h' = 0.5·tanh(0.4)
        assert!((next.c.data()[0] - 0.4).abs() < 1e-12);
        assert!((next.h.data()[0] - 0.18997).abs() < 1e-5);
    }

    #[test]
    fn lstm_zero_fixed_point() {
        let p = LstmParams::zeros(2, 3);
        let (next, _) = p
            .step(&Tensor::full(&[1, 2], 0.7), &LstmState::zeros(1, 3))
            .unwrap();
        assert_eq!(next.c.data(), &[0.0; 3]);
        assert_eq!(next.h.data(), &[0.0; 3]);
    }

    #[test]
    fn gru_zero_params_examples() {
        let p = GruParams::zeros(1, 1);
        let (next, cache) = p.step(&scalar(1.3), &GruState { h: scalar(0.4) }).unwrap();
        let [z, r, ht] = cache.gates();
        assert_eq!((z.data()[0], r.data()[0], ht.data()[0]), (0.5, 0.5, 0.0));
        assert!((next.h.data()[0] - 0.2).abs() < 1e-15);
        let (next, _) = p.step(&scalar(1.3), &GruState::zeros(1, 1)).unwrap();
        assert_eq!(next.h.data(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = LstmParams::zeros(2, 3);
        assert!(p
            .step(&Tensor::zeros(&[1, 3]), &LstmState::zeros(1, 3))
            .is_err());
        let g = GruParams::zeros(2, 3);
        assert!(g
            .step(&Tensor::zeros(&[1, 2]), &GruState::zeros(2, 3))
            .is_err());
    }

    #[test]
    fn unroll_of_one_step_equals_cell_step() {
        let mut rng = Rng::new(4);
        let p = GruParams::init(3, 4, &mut rng).unwrap();
        let x = Tensor::new(vec![2, 1, 3], (0..6).map(|_| rng.normal()).collect()).unwrap();
        let (step, _) = p
            .step(&x.timestep(0).unwrap(), &GruState::zeros(2, 4))
            .unwrap();
        let (seq, _) = Recurrent::Gru(p)
            .forward(&x, &InitialState::default())
            .unwrap();
        assert_eq!(last_hidden(&seq).unwrap(), step.h);
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let mut rng = Rng::new(5);
        let cell = Recurrent::zeros(CellKind::Gru, 2, 3);
        let x = Tensor::new(vec![2, 9, 2], (0..36).map(|_| rng.normal()).collect()).unwrap();
        let (seq, _) = cell.forward(&x, &InitialState::default()).unwrap();
        assert_eq!(seq.max_abs(), 0.0);
    }

    #[test]
    fn empty_sequence_rejected() {
        let cell = Recurrent::zeros(CellKind::Lstm, 1, 1);
        assert!(cell
            .forward(&Tensor::zeros(&[1, 0, 1]), &InitialState::default())
            .is_err());
    }

    #[test]
    fn lstm_saturated_gates_keep_the_memory_cell() {
        let mut rng = Rng::new(6);
        let mut p = LstmParams::init(2, 3, &mut rng).unwrap();
        p.b[F] = Tensor::full(&[3], 50.0);
        p.b[I] = Tensor::full(&[3], -50.0);
        let c0 = Tensor::new(vec![1, 3], vec![0.7, -0.2, 0.4]).unwrap();
        let init = InitialState {
            h: None,
            c: Some(c0.clone()),
        };
        let x = Tensor::new(
            vec![1, 40, 2],
            (0..80).map(|_| 0.3 * rng.normal()).collect(),
        )
        .unwrap();
        let (_, cache) = Recurrent::Lstm(p).forward(&x, &init).unwrap();
        let drift = cache
            .last_cell()
            .unwrap()
            .zip_map(&c0, "t", |a, b| a - b)
            .unwrap();
        assert!(drift.l2_norm() < 1e-8, "{}", drift.l2_norm());
    }

    #[test]
    fn gru_saturated_update_gate_keeps_state() {
        let mut rng = Rng::new(7);
        let mut p = GruParams::init(2, 3, &mut rng).unwrap();
        p.b[Z] = Tensor::full(&[3], 50.0);
        let h0 = Tensor::new(vec![1, 3], vec![0.5, -0.9, 0.1]).unwrap();
        let init = InitialState {
            h: Some(h0.clone()),
            c: None,
        };
        let x = Tensor::new(
            vec![1, 40, 2],
            (0..80).map(|_| 0.3 * rng.normal()).collect(),
        )
        .unwrap();
        let (seq, _) = Recurrent::Gru(p).forward(&x, &init).unwrap();
        let last = last_hidden(&seq).unwrap();
        let drift = last.zip_map(&h0, "t", |a, b| a - b).unwrap();
        assert!(drift.l2_norm() < 1e-8);
    }

    #[test]
    fn gate_ranges_and_bounded_state() {
        let mut rng = Rng::new(8);
        let x = Tensor::new(
            vec![3, 12, 4],
            (0..144).map(|_| 3.0 * rng.normal()).collect(),
        )
        .unwrap();
        let lstm = Recurrent::init(CellKind::Lstm, 4, 5, &mut rng).unwrap();
        let (hs, cache) = lstm.forward(&x, &InitialState::default()).unwrap();
        assert!(hs.max_abs() <= 1.0);
        for step in cache.lstm_steps().unwrap() {
            let [f, i, g, o] = step.gates();
            for gate in [f, i, o] {
                assert!(gate.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(g.data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
        let gru = Recurrent::init(CellKind::Gru, 4, 5, &mut rng).unwrap();
        let (hs, cache) = gru.forward(&x, &InitialState::default()).unwrap();
        assert!(hs.max_abs() <= 1.0);
        for step in cache.gru_steps().unwrap() {
            let [z, r, ht] = step.gates();
            assert!(z.data().iter().chain(r.data()).all(|&v| v > 0.0 && v < 1.0));
            assert!(ht.data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(9);
        let cell = Recurrent::init(CellKind::Lstm, 2, 4, &mut rng).unwrap();
        let x = Tensor::new(vec![2, 6, 2], (0..24).map(|_| rng.normal()).collect()).unwrap();
        let (a, _) = cell.forward(&x, &InitialState::default()).unwrap();
        let (b, _) = cell.forward(&x, &InitialState::default()).unwrap();
        assert_eq!(a, b);
    }
}
