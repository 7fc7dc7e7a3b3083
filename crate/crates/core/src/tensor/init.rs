use super::{Rng, Tensor};
use crate::error::{Error, Result};

fn uniform_tensor(shape: &[usize], limit: f64, rng: &mut Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data)
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidArgument(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

/// Uniform on `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn init_glorot_uniform(
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
    rng: &mut Rng,
) -> Result<Tensor> {
    check_positive("fan_in", fan_in)?;
    check_positive("fan_out", fan_out)?;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_tensor(shape, limit, rng)
}

/// Uniform on `[-L, L]` with `L = sqrt(6 / fan_in)`.
pub fn init_he_uniform(fan_in: usize, shape: &[usize], rng: &mut Rng) -> Result<Tensor> {
    check_positive("fan_in", fan_in)?;
    let limit = (6.0 / fan_in as f64).sqrt();
    uniform_tensor(shape, limit, rng)
}

/// Orthogonal `[rows, cols]` matrix from the QR factorisation of a gaussian draw.
///
/// Columns are orthonormal when `rows >= cols`, rows are orthonormal otherwise.
/// The factorisation is modified Gram–Schmidt with one re-orthogonalisation
/// pass, which yields the Q whose R has a positive diagonal.
pub fn init_orthogonal(rows: usize, cols: usize, rng: &mut Rng) -> Result<Tensor> {
    check_positive("rows", rows)?;
    check_positive("cols", cols)?;
    if rows < cols {
        return init_orthogonal(cols, rows, rng)?.transpose();
    }
    // column-major working copy: cols vectors of length rows
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.normal()).collect())
        .collect();
    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                let (done, rest) = q.split_at_mut(j);
                for (v, u) in rest[0].iter_mut().zip(&done[i]) {
                    *v -= dot * u;
                }
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidArgument(
                "degenerate gaussian draw in orthogonal init".into(),
            ));
        }
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut data = vec![0.0; rows * cols];
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * cols + j] = v;
        }
    }
    Tensor::new(vec![rows, cols], data)
}
