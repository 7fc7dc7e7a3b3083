//! Dense row-major `f64` tensors and the handful of kernels the layers need.
//!
//! Shapes are explicit and checked on every binary op. There is no
//! broadcasting apart from adding a bias row to every row of a matrix.

mod init;
mod rng;

pub use init::{init_glorot_uniform, init_he_uniform, init_orthogonal};
pub use rng::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Value-wise operations accepted by [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul
        )
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        // same function, but exp never overflows for very negative x
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor from nested rows. Panics on ragged input; meant for tests and literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), cols], data).expect("non-empty rows")
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor::new(vec![values.len()], values.to_vec()).expect("non-empty vector")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape.to_vec(), self.data)
    }

    /// `(rows, cols)` of a matrix; errors for any other rank.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::shape(op, other, &[0, 0])),
        }
    }

    /// `(n, steps, channels)` of a batch of sequences.
    pub fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, t, c] => Ok((n, t, c)),
            other => Err(Error::shape(op, other, &[0, 0, 0])),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Adds `bias` (shape `[cols]`) to every row of a `[rows, cols]` matrix.
    pub fn add_row_vector(&mut self, bias: &Tensor) -> Result<()> {
        let (_, cols) = self.dims2("add_row_vector")?;
        if bias.shape != [cols] {
            return Err(Error::shape("add_row_vector", &self.shape, &bias.shape));
        }
        for row in self.data.chunks_exact_mut(cols) {
            for (v, &b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums of a matrix, shape `[cols]`.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (_, cols) = self.dims2("sum_rows")?;
        let mut out = vec![0.0; cols];
        for row in self.data.chunks_exact(cols) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Tensor::new(vec![cols], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// Index of the largest entry of each row (first on ties).
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let (_, cols) = self.dims2("argmax_rows")?;
        Ok(self
            .data
            .chunks_exact(cols)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    /// Slice `[n, steps, c]` at timestep `t`, giving `[n, c]`.
    pub fn timestep(&self, t: usize) -> Result<Tensor> {
        let (n, steps, c) = self.dims3("timestep")?;
        if t >= steps {
            return Err(Error::InvalidArgument(format!(
                "timestep {t} out of range for {steps} steps"
            )));
        }
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            let base = (i * steps + t) * c;
            out.extend_from_slice(&self.data[base..base + c]);
        }
        Tensor::new(vec![n, c], out)
    }

    /// Inverse of [`Tensor::timestep`]: stacks `steps` matrices `[n, c]` into `[n, steps, c]`.
    pub fn stack_timesteps(steps: &[Tensor]) -> Result<Tensor> {
        let first = steps
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero timesteps".into()))?;
        let (n, c) = first.dims2("stack_timesteps")?;
        let t_len = steps.len();
        let mut out = vec![0.0; n * t_len * c];
        for (t, s) in steps.iter().enumerate() {
            if s.shape != first.shape {
                return Err(Error::shape("stack_timesteps", &first.shape, &s.shape));
            }
            for i in 0..n {
                let dst = (i * t_len + t) * c;
                out[dst..dst + c].copy_from_slice(&s.data[i * c..(i + 1) * c]);
            }
        }
        Tensor::new(vec![n, t_len, c], out)
    }

    /// Selects samples (first axis) by index.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.shape[0];
        let stride = self.len() / n;
        let mut out = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "sample index {i} out of range for {n}"
                )));
            }
            out.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::new(shape, out)
    }

    /// Concatenates two matrices with equal row counts along the columns.
    pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ra, ca) = a.dims2("concat_cols")?;
        let (rb, cb) = b.dims2("concat_cols")?;
        if ra != rb {
            return Err(Error::shape("concat_cols", &a.shape, &b.shape));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(a.row(i));
            out.extend_from_slice(b.row(i));
        }
        Tensor::new(vec![ra, ca + cb], out)
    }

    /// Splits a matrix into its first `left` columns and the rest.
    pub fn split_cols(&self, left: usize) -> Result<(Tensor, Tensor)> {
        let (r, c) = self.dims2("split_cols")?;
        if left == 0 || left >= c {
            return Err(Error::InvalidArgument(format!(
                "cannot split {c} columns at {left}"
            )));
        }
        let mut a = Vec::with_capacity(r * left);
        let mut b = Vec::with_capacity(r * (c - left));
        for i in 0..r {
            let row = self.row(i);
            a.extend_from_slice(&row[..left]);
            b.extend_from_slice(&row[left..]);
        }
        Ok((
            Tensor::new(vec![r, left], a)?,
            Tensor::new(vec![r, c - left], b)?,
        ))
    }
}

/// Standard matrix product `[m, k] x [k, n] -> [m, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `aᵀ · b` for `a: [k, m]`, `b: [k, n]`, without materialising the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = a.dims2("matmul_tn")?;
    let (k2, n) = b.dims2("matmul_tn")?;
    if k != k2 {
        return Err(Error::shape("matmul_tn", &a.shape, &b.shape));
    }
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let a_row = &a.data[p * m..(p + 1) * m];
        let b_row = &b.data[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul_nt")?;
    let (n, k2) = b.dims2("matmul_nt")?;
    if k != k2 {
        return Err(Error::shape("matmul_nt", &a.shape, &b.shape));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Applies `op` value-wise. Binary ops need `b` with the same shape as `a`.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    match (op.is_binary(), b) {
        (true, Some(b)) => match op {
            ElementwiseOp::Add => a.zip_map(b, "add", |x, y| x + y),
            ElementwiseOp::Sub => a.zip_map(b, "sub", |x, y| x - y),
            ElementwiseOp::Mul => a.zip_map(b, "mul", |x, y| x * y),
            _ => unreachable!(),
        },
        (true, None) => Err(Error::InvalidArgument(format!(
            "{op:?} needs a second operand"
        ))),
        (false, _) => Ok(match op {
            ElementwiseOp::Sigmoid => a.map(sigmoid),
            ElementwiseOp::Tanh => a.map(f64::tanh),
            ElementwiseOp::Relu => a.map(relu),
            _ => unreachable!(),
        }),
    }
}

/// Softmax over the last axis, with max-subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let k = *logits
        .shape
        .last()
        .ok_or_else(|| Error::InvalidArgument("softmax of a scalar".into()))?;
    let mut out = logits.data.clone();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(logits.shape.clone(), out)
}
