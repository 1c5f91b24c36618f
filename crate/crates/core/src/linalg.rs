//! Small dense linear algebra: SPD Cholesky with escalating jitter, triangular
//! solves, a one-sided Jacobi SVD for null spaces, and `log_sum_exp`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix payload",
                expected: format!("{}", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "matrix row",
                    expected: format!("{cols} columns"),
                    got: format!("{} in row {i}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// `A[idx, idx]`
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let q = idx.len();
        let mut out = Self::zeros(q, q);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * q + b] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                what: "matmul",
                expected: format!("{} rows", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Symmetric up to `tol` relative to the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: DenseMatrix,
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }
}

fn try_cholesky(a: &DenseMatrix, jitter: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)] + jitter;
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Cholesky factorization of a symmetric matrix.
///
/// Tries `jitter_start` first, then escalates the diagonal jitter by factors
/// of ten from `1e-10·mean(diag)` up to `1e-4·mean(diag)`.
pub fn spd_cholesky(a: &DenseMatrix, jitter_start: f64) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            what: "cholesky input",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(CholeskyFactor {
            l: DenseMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    if let Some(l) = try_cholesky(a, jitter_start) {
        return Ok(CholeskyFactor {
            l,
            jitter: jitter_start,
        });
    }
    let mean_diag = a.diag().iter().sum::<f64>() / n as f64;
    let cap = 1e-4 * mean_diag;
    if !(mean_diag > 0.0) {
        return Err(Error::NotPositiveDefinite(0.0));
    }
    let mut jitter = 1e-10 * mean_diag;
    while jitter <= cap * (1.0 + 1e-12) {
        if jitter > jitter_start {
            if let Some(l) = try_cholesky(a, jitter) {
                return Ok(CholeskyFactor { l, jitter });
            }
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(cap))
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        let p = l[(i, i)];
        if p == 0.0 {
            return Err(Error::ZeroPivot);
        }
        y[i] = s / p;
    }
    Ok(y)
}

/// Solve `Lᵀ x = y` for lower-triangular `L`.
pub fn back_substitute_transpose(l: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        let p = l[(i, i)];
        if p == 0.0 {
            return Err(Error::ZeroPivot);
        }
        x[i] = s / p;
    }
    Ok(x)
}

/// Solve `(L Lᵀ) x = b`.
pub fn spd_solve(factor: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != factor.dim() {
        return Err(Error::ShapeMismatch {
            what: "spd_solve rhs",
            expected: format!("{}", factor.dim()),
            got: format!("{}", b.len()),
        });
    }
    let y = forward_substitute(&factor.l, b)?;
    back_substitute_transpose(&factor.l, &y)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_triangular_inverse(l: &DenseMatrix) -> Result<DenseMatrix> {
    let n = l.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = forward_substitute(l, &e)?;
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    Ok(inv)
}

/// Orthonormal basis of the null space of `a`, returned as rows.
///
/// Uses a one-sided (Hestenes) Jacobi SVD: columns of `a·V` are rotated until
/// mutually orthogonal, so the columns of `V` whose images have norm at most
/// `tol_rel · s_max` span the numerical null space.
pub fn svd_null_rows(a: &DenseMatrix, tol_rel: f64) -> Vec<Vec<f64>> {
    let (m, k) = (a.rows(), a.cols());
    if k == 0 {
        return Vec::new();
    }
    // Column-major working copies.
    let mut b: Vec<Vec<f64>> = (0..k).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    const EPS: f64 = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(&b[p], &b[p]);
                let beta = dot(&b[q], &b[q]);
                let gamma = dot(&b[p], &b[q]);
                if gamma == 0.0 || gamma.abs() <= EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut b, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = b.iter().map(|col| dot(col, col).sqrt()).collect();
    let s_max = norms.iter().cloned().fold(0.0, f64::max);
    norms
        .iter()
        .zip(v)
        .filter(|(&s, _)| s <= tol_rel * s_max)
        .map(|(_, col)| col)
        .collect()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// `log Σ exp(v_i)` without overflow. Entries equal to `-inf` contribute zero.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DenseMatrix {
        let g = DenseMatrix::from_vec(n, n, (0..n * n).map(|_| rng.random::<f64>() - 0.5).collect())
            .unwrap();
        let mut a = g.matmul(&g.transpose()).unwrap();
        for i in 0..n {
            a[(i, i)] += 0.1;
        }
        a
    }

    #[test]
    fn cholesky_identity() {
        let f = spd_cholesky(&DenseMatrix::identity(2), 0.0).unwrap();
        assert_eq!(f.l, DenseMatrix::identity(2));
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn cholesky_hand_factorization() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let f = spd_cholesky(&a, 0.0).unwrap();
        assert!((f.l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(f.l[(0, 1)], 0.0);
        assert!((f.l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((f.l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_indefinite_fails_after_cap() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(spd_cholesky(&a, 0.0), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn cholesky_singular_gets_jitter() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let f = spd_cholesky(&a, 0.0).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-4);
    }

    #[test]
    fn solve_trivial_cases() {
        let f = spd_cholesky(&DenseMatrix::identity(3), 0.0).unwrap();
        assert_eq!(spd_solve(&f, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let f = spd_cholesky(&DenseMatrix::from_diag(&[2.0]), 0.0).unwrap();
        assert!((spd_solve(&f, &[4.0]).unwrap()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn solve_backward_error_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = 1 + trial % 64;
            let a = random_spd(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let f = spd_cholesky(&a, 0.0).unwrap();
            let x = spd_solve(&f, &b).unwrap();
            let llt = f.l.matmul(&f.l.transpose()).unwrap();
            let r = llt.matvec(&x);
            let binf = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = r.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(res <= 1e-8 * (1.0 + binf), "n={n} residual {res}");
        }
    }

    #[test]
    fn null_rows_rank_one() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let null = svd_null_rows(&a, 1e-10);
        assert_eq!(null.len(), 2);
        for v in &null {
            assert!(v.iter().sum::<f64>().abs() < 1e-12);
            assert!((dot(v, v) - 1.0).abs() < 1e-12);
        }
        assert!(dot(&null[0], &null[1]).abs() < 1e-12);
    }

    #[test]
    fn null_rows_full_rank_is_empty() {
        assert!(svd_null_rows(&DenseMatrix::identity(3), 1e-10).is_empty());
    }

    #[test]
    fn null_rows_random_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = DenseMatrix::from_vec(3, 6, (0..18).map(|_| rng.random::<f64>() - 0.5).collect())
                .unwrap();
            let null = svd_null_rows(&a, 1e-10);
            assert_eq!(null.len(), 3);
            let fro = a.frobenius_norm();
            for (i, v) in null.iter().enumerate() {
                let av = a.matvec(v);
                let inf = av.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(inf <= 1e-9 * fro, "residual {inf}");
                for w in &null[..i] {
                    assert!(dot(v, w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn null_space_plus_row_space_spans() {
        // Rank deficient: 4x7 with rank 3.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let left = DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.random::<f64>()).collect()).unwrap();
        let right = DenseMatrix::from_vec(3, 7, (0..21).map(|_| rng.random::<f64>()).collect()).unwrap();
        let a = left.matmul(&right).unwrap();
        assert_eq!(svd_null_rows(&a, 1e-10).len(), 7 - 3);
    }

    #[test]
    fn lse_cases() {
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn lse_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
            // Neumaier-compensated reference sum of exp(v_i - 10).
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for &x in &v {
                let t = (x - 10.0).exp();
                let u = s + t;
                if s.abs() >= t.abs() {
                    c += (s - u) + t;
                } else {
                    c += (t - u) + s;
                }
                s = u;
            }
            let reference = 10.0 + (s + c).ln();
            assert!((log_sum_exp(&v) - reference).abs() < 1e-13);
        }
    }
}
