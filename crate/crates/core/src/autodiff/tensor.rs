//! Dense row-major tensors of 64-bit reals.
//!
//! Every numeric object in the crate (batches, weights, gradients) is one of
//! these. Graph operations only ever see rank-2 shapes; scalars are `[1, 1]`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    /// 1×n row vector.
    pub fn row(values: &[f64]) -> Self {
        Tensor {
            shape: vec![1, values.len()],
            data: values.to_vec(),
        }
    }

    /// n×1 column vector.
    pub fn col(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len(), 1],
            data: values.to_vec(),
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
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

    /// Row count under the rank-2 interpretation used by the graph.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Column count under the rank-2 interpretation used by the graph.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Finiteness probe. Sums magnitudes in one vectorizable pass: any NaN
    /// or infinity poisons the sum. (A sum overflowing to infinity on its
    /// own would need entries near 1e304, far outside anything this crate
    /// produces.)
    pub fn all_finite(&self) -> bool {
        self.data.iter().map(|v| v.abs()).sum::<f64>().is_finite()
    }
}

// Matrix kernel parallelization threshold, in multiply-adds. Below this the
// rayon dispatch overhead costs more than the work.
const PAR_MADDS: usize = 1 << 18;

/// Splits `m` rows into a handful of row blocks per thread, never more.
fn row_block(m: usize) -> usize {
    let threads = rayon::current_num_threads().max(1);
    m.div_ceil(threads * 2).max(1)
}

/// C = A·B with A `m×k`, B `k×n`. Row-parallel; each output row is computed
/// sequentially so results are bit-identical regardless of thread count.
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |ci: &mut [f64], i: usize| {
        ci.fill(0.0);
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cij, bpj) in ci.iter_mut().zip(brow) {
                *cij += aip * bpj;
            }
        }
    };
    if m * k * n >= PAR_MADDS {
        let block = row_block(m);
        c.par_chunks_mut(block * n)
            .enumerate()
            .for_each(|(bi, chunk)| {
                for (j, ci) in chunk.chunks_mut(n).enumerate() {
                    row(ci, bi * block + j);
                }
            });
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            row(ci, i);
        }
    }
}

/// C = A·Bᵀ with A `m×k`, B `n×k`. Dot-product form: both operands are read
/// contiguously.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let row = |ci: &mut [f64], i: usize| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cij) in ci.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *cij = acc;
        }
    };
    if m * k * n >= PAR_MADDS {
        let block = row_block(m);
        c.par_chunks_mut(block * n)
            .enumerate()
            .for_each(|(bi, chunk)| {
                for (j, ci) in chunk.chunks_mut(n).enumerate() {
                    row(ci, bi * block + j);
                }
            });
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            row(ci, i);
        }
    }
}

/// C = Aᵀ·B with A `k×m`, B `k×n`. Used for weight gradients; parallel over
/// output rows, accumulating over the shared `k` axis sequentially.
pub fn matmul_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |cp: &mut [f64], p: usize| {
        cp.fill(0.0);
        for i in 0..k {
            let aip = a[i * m + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            for (cpj, bij) in cp.iter_mut().zip(brow) {
                *cpj += aip * bij;
            }
        }
    };
    if m * k * n >= PAR_MADDS {
        let block = row_block(m);
        c.par_chunks_mut(block * n)
            .enumerate()
            .for_each(|(bi, chunk)| {
                for (j, cp) in chunk.chunks_mut(n).enumerate() {
                    row(cp, bi * block + j);
                }
            });
    } else {
        for (p, cp) in c.chunks_mut(n).enumerate() {
            row(cp, p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_identity() {
        let eye = [1.0, 0.0, 0.0, 1.0];
        let v = [3.5, -2.0];
        let mut out = [0.0; 2];
        matmul_nn(&eye, &v, 2, 2, 1, &mut out);
        assert_eq!(out, v);
    }

    #[test]
    fn matmul_variants_agree() {
        // Random-ish fixed matrices; nt and tn must match nn applied to
        // explicit transposes.
        let a: Vec<f64> = (0..6).map(|i| (i as f64) * 0.7 - 1.3).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64) * -0.31 + 0.8).collect(); // 3x4
        let mut c_nn = vec![0.0; 8];
        matmul_nn(&a, &b, 2, 3, 4, &mut c_nn);

        // bt is 4x3 so that a (2x3) · btᵀ (3x4) reproduces c_nn
        let mut bt = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                bt[j * 3 + i] = b[i * 4 + j];
            }
        }
        let mut c_nt = vec![0.0; 8];
        matmul_nt(&a, &bt, 2, 3, 4, &mut c_nt);
        assert_eq!(c_nn, c_nt);

        // atᵀ (3x2 stored as 2 rows of 3... transposed to 3x2) then tn
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                at[j * 2 + i] = a[i * 3 + j];
            }
        }
        // c = atᵀ·b = a·b again, with at 3x2
        let mut c_tn = vec![0.0; 8];
        matmul_tn(&at, &b, 3, 2, 4, &mut c_tn);
        assert_eq!(c_nn, c_tn);
    }

    #[test]
    fn row_results_independent_of_batch() {
        // The same input row must produce bit-identical output whether it is
        // alone or part of a larger batch.
        let w: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 11) as f64 * 0.17).collect(); // 3x4
        let single = [0.2, -1.1, 0.7];
        let batch = [9.0, 9.0, 9.0, 0.2, -1.1, 0.7, 1.0, 2.0, 3.0];
        let mut out1 = vec![0.0; 4];
        matmul_nn(&single, &w, 1, 3, 4, &mut out1);
        let mut out3 = vec![0.0; 12];
        matmul_nn(&batch, &w, 3, 3, 4, &mut out3);
        assert_eq!(out1[..], out3[4..8]);
    }
}
