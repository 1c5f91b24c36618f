use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Rows at or above this length are evaluated in parallel.
const PAR_ROW_THRESHOLD: usize = 4096;

/// Symmetric kernel matrix accessed by index pairs.
///
/// Every compression routine is written against this trait so it runs
/// unchanged on a lazily evaluated Stein kernel, a dense test matrix, or a
/// constant-shifted kernel.
pub trait KernelOracle: Sync {
    fn len(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.entry(i, i)).collect()
    }

    fn row_into(&self, i: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        if out.len() >= PAR_ROW_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(j, o)| *o = self.entry(i, j));
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.entry(i, j);
            }
        }
    }

    fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.row_into(i, &mut out);
        out
    }
}

impl<K: KernelOracle + ?Sized> KernelOracle for &K {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        (**self).entry(i, j)
    }
    fn diag(&self) -> Vec<f64> {
        (**self).diag()
    }
    fn row_into(&self, i: usize, out: &mut [f64]) {
        (**self).row_into(i, out)
    }
}

/// Kernel backed by an explicit symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    k: DenseMatrix,
}

impl DenseKernel {
    pub fn new(k: DenseMatrix) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::ShapeMismatch {
                what: "kernel matrix",
                expected: "square".into(),
                got: format!("{}x{}", k.rows(), k.cols()),
            });
        }
        if !k.is_finite() {
            return Err(Error::NonFinite("kernel matrix"));
        }
        if !k.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("kernel matrix is not symmetric".into()));
        }
        Ok(Self { k })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.k
    }
}

impl KernelOracle for DenseKernel {
    fn len(&self) -> usize {
        self.k.rows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.k[(i, j)]
    }

    fn diag(&self) -> Vec<f64> {
        self.k.diag()
    }

    fn row_into(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.k.row(i));
    }
}

/// The constant-regularized kernel `k + c`.
#[derive(Debug, Clone, Copy)]
pub struct Offset<K> {
    inner: K,
    c: f64,
}

impl<K: KernelOracle> Offset<K> {
    pub fn new(inner: K, c: f64) -> Self {
        Self { inner, c }
    }

    pub fn offset(&self) -> f64 {
        self.c
    }
}

impl<K: KernelOracle> KernelOracle for Offset<K> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.inner.entry(i, j) + self.c
    }

    fn diag(&self) -> Vec<f64> {
        self.inner.diag().into_iter().map(|v| v + self.c).collect()
    }

    fn row_into(&self, i: usize, out: &mut [f64]) {
        self.inner.row_into(i, out);
        for o in out.iter_mut() {
            *o += self.c;
        }
    }
}

/// Dense copy of `K[indices, indices]`.
pub fn materialize<K: KernelOracle + ?Sized>(oracle: &K, indices: &[usize]) -> DenseMatrix {
    let q = indices.len();
    let mut out = DenseMatrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let v = oracle.entry(indices[a], indices[b]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}
