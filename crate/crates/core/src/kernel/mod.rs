//! Points, scores, base kernels and the Stein kernel.

mod fd;
mod oracle;
mod stein;

pub use fd::fd_stein_oracle;
pub use oracle::{materialize, DenseKernel, KernelOracle, Offset};
pub use stein::{median_bandwidth, stein_eval_points, SteinKernel};

use crate::error::{Error, Result};
use crate::linalg::{dot, lower_triangular_inverse, spd_cholesky, DenseMatrix};

fn check_rows(what: &'static str, data: &[f64], n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("{what} needs n >= 1 and d >= 1")));
    }
    if data.len() != n * d {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("{n}x{d}"),
            got: format!("{} values", data.len()),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// An `n × d` sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        check_rows("points", &data, n, d)?;
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = DenseMatrix::from_rows(rows)?;
        Self::new(m.as_slice().to_vec(), m.rows(), m.cols())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows at `indices`, in order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, len: self.n });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }
}

/// Scores `∇log p(x_i)`, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl ScoreSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        check_rows("scores", &data, n, d)?;
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = DenseMatrix::from_rows(rows)?;
        Self::new(m.as_slice().to_vec(), m.rows(), m.cols())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, len: self.n });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }
}

/// Symmetric positive definite preconditioner `M = L Lᵀ`.
///
/// The Stein kernel measures distances in `‖x‖²_M = xᵀM⁻¹x = ‖L⁻¹x‖²` and
/// multiplies scores by `M`.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    m: DenseMatrix,
    l: DenseMatrix,
    l_inv: DenseMatrix,
    identity: bool,
}

impl Preconditioner {
    pub fn identity(d: usize) -> Self {
        Self {
            m: DenseMatrix::identity(d),
            l: DenseMatrix::identity(d),
            l_inv: DenseMatrix::identity(d),
            identity: true,
        }
    }

    pub fn new(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() || m.rows() == 0 {
            return Err(Error::ShapeMismatch {
                what: "preconditioner",
                expected: "non-empty square matrix".into(),
                got: format!("{}x{}", m.rows(), m.cols()),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("preconditioner"));
        }
        if !m.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("preconditioner is not symmetric".into()));
        }
        // Strictly positive definite: no jitter allowed.
        let chol = spd_cholesky(&m, 0.0)?;
        if chol.jitter != 0.0 {
            return Err(Error::NotPositiveDefinite(0.0));
        }
        let l_inv = lower_triangular_inverse(&chol.l)?;
        let identity = m == DenseMatrix::identity(m.rows());
        Ok(Self {
            m,
            l: chol.l,
            l_inv,
            identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn lower_inverse(&self) -> &DenseMatrix {
        &self.l_inv
    }

    /// `L⁻¹ x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        if self.identity {
            return x.to_vec();
        }
        self.l_inv.matvec(x)
    }

    /// `M s`.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        if self.identity {
            return s.to_vec();
        }
        self.m.matvec(s)
    }

    /// `‖x − y‖_M`.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let w = self.whiten(&diff);
        dot(&w, &w).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `κ(t) = exp(−t / (2σ²))`
    Gaussian,
    /// `κ(t) = (1 + t/σ²)^(−1/2)`
    Imq,
}

/// Radial base kernel `k(x, y) = κ(‖x − y‖²_M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseKernelSpec {
    pub family: KernelFamily,
    pub sigma_sq: f64,
}

impl BaseKernelSpec {
    pub fn new(family: KernelFamily, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {sigma_sq}")));
        }
        Ok(Self { family, sigma_sq })
    }

    /// `(κ(t), κ'(t), κ''(t))`.
    #[inline]
    pub fn profile(&self, t: f64) -> (f64, f64, f64) {
        let s2 = self.sigma_sq;
        match self.family {
            KernelFamily::Gaussian => {
                let k = (-t / (2.0 * s2)).exp();
                (k, -k / (2.0 * s2), k / (4.0 * s2 * s2))
            }
            KernelFamily::Imq => {
                let q = 1.0 / (1.0 + t / s2).sqrt();
                let q3 = q * q * q;
                (q, -q3 / (2.0 * s2), 0.75 * q3 * q * q / (s2 * s2))
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.profile(t).0
    }
}
