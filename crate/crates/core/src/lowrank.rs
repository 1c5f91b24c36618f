//! Weighted randomly pivoted Cholesky, accelerated entropic mirror descent,
//! and low-rank debiasing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelOracle;
use crate::linalg::{dot, log_sum_exp, DenseMatrix};
use crate::resample::resample_stratified;
use crate::weights::WeightVector;

/// Relative residual trace below which pivoting stops.
const EARLY_STOP: f64 = 1e-14;

/// `n×r` factor with `FFᵀ ≈ K`, plus the pivots that produced it.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    f: DenseMatrix,
    pivots: Vec<usize>,
}

impl LowRankFactor {
    pub fn factor(&self) -> &DenseMatrix {
        &self.f
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Number of nonzero columns; below the requested rank after an early stop.
    pub fn columns_used(&self) -> usize {
        self.pivots.len()
    }

    pub fn rank(&self) -> usize {
        self.f.cols()
    }

    /// `Σ_c F_ic²` for every row.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.f.rows()).map(|i| dot(self.f.row(i), self.f.row(i))).collect()
    }

    /// `FFᵀx`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let r = self.f.cols();
        let mut y = vec![0.0; r];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (a, &b) in y.iter_mut().zip(self.f.row(i)) {
                    *a += xi * b;
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.f.row(i), &y);
        }
    }

    /// `tr(K − FFᵀ)` given the diagonal of `K`.
    pub fn residual_trace(&self, diag: &[f64]) -> f64 {
        diag.iter().zip(self.row_norms_sq()).map(|(d, f)| d - f).sum()
    }
}

fn sample_proportional<R: Rng + ?Sized>(d: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &v) in d.iter().enumerate() {
        if v > 0.0 {
            acc += v;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Randomly pivoted partial Cholesky of the reweighted kernel
/// `k(i,j)·√(w_i w_j)`, with the weighting undone on the returned factor.
pub fn weighted_rpcholesky<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    w: &[f64],
    r: usize,
    rng: &mut R,
) -> Result<LowRankFactor> {
    let n = oracle.len();
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{n}"),
            got: format!("{}", w.len()),
        });
    }
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidWeights("pivoting weights must be nonnegative".into()));
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut d: Vec<f64> = oracle.diag().iter().zip(w).map(|(k, wi)| (k * wi).max(0.0)).collect();
    let initial: f64 = d.iter().sum();
    let mut f = DenseMatrix::zeros(n, r);
    let mut pivots = Vec::with_capacity(r);
    let mut row = vec![0.0; n];
    let mut g = vec![0.0; n];
    'columns: for c in 0..r {
        let mut attempts = 0;
        let s = loop {
            let total: f64 = d.iter().sum();
            if !(total > EARLY_STOP * initial) || total <= 0.0 {
                break 'columns;
            }
            let s = sample_proportional(&d, total, rng);
            oracle.row_into(s, &mut row);
            let fs = f.row(s)[..c].to_vec();
            for j in 0..n {
                g[j] = row[j] * sw[j] * sw[s] - dot(&f.row(j)[..c], &fs);
            }
            if g[s] > 0.0 {
                break s;
            }
            attempts += 1;
            d[s] = 0.0;
            if attempts > 1 {
                break 'columns;
            }
        };
        let scale = 1.0 / g[s].sqrt();
        for j in 0..n {
            let v = g[j] * scale;
            f[(j, c)] = v;
            d[j] = (d[j] - v * v).max(0.0);
        }
        d[s] = 0.0;
        pivots.push(s);
    }
    for (i, &s) in sw.iter().enumerate() {
        let inv = if s > 0.0 { 1.0 / s } else { 0.0 };
        f.row_mut(i).iter_mut().for_each(|v| *v *= inv);
    }
    Ok(LowRankFactor { f, pivots })
}

/// `xᵀAx` for a matrix-free `A`.
pub fn quadratic<M: Fn(&[f64], &mut [f64])>(matvec: &M, x: &[f64]) -> f64 {
    let mut y = vec![0.0; x.len()];
    matvec(x, &mut y);
    dot(x, &y)
}

/// Accelerated entropic mirror descent for `min_{w ∈ Δ} wᵀKw`, with `K`
/// given as a matrix-vector product. Runs `steps` iterations from `w0`.
pub fn amd<M: Fn(&[f64], &mut [f64])>(
    matvec: M,
    diag: &[f64],
    steps: usize,
    w0: &[f64],
    aggressive: bool,
) -> Result<Vec<f64>> {
    let n = diag.len();
    if w0.len() != n {
        return Err(Error::ShapeMismatch {
            what: "initial weights",
            expected: format!("{n}"),
            got: format!("{}", w0.len()),
        });
    }
    if w0.iter().any(|&v| v < 0.0) || (w0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights("initial weights must lie in the simplex".into()));
    }
    let scale = if aggressive {
        dot(w0, diag)
    } else {
        diag.iter().cloned().fold(0.0, f64::max)
    };
    if !(scale > 0.0) {
        return Ok(w0.to_vec());
    }
    let eta = 1.0 / (8.0 * scale);
    let mut w = w0.to_vec();
    let mut v = w0.to_vec();
    let mut log_v: Vec<f64> = w0.iter().map(|x| x.ln()).collect();
    let mut z = vec![0.0; n];
    let mut kz = vec![0.0; n];
    for t in 1..=steps {
        let beta = 2.0 / (t as f64 + 1.0);
        for i in 0..n {
            z[i] = (1.0 - beta) * w[i] + beta * v[i];
        }
        matvec(&z, &mut kz);
        let step = 2.0 * t as f64 * eta;
        for i in 0..n {
            log_v[i] -= step * kz[i];
        }
        let lse = log_sum_exp(&log_v);
        for i in 0..n {
            log_v[i] -= lse;
            v[i] = log_v[i].exp();
            w[i] = (1.0 - beta) * w[i] + beta * v[i];
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LdParams {
    pub rank: usize,
    pub steps: usize,
    pub rounds: usize,
}

impl LdParams {
    /// `T = ⌈7√n₀⌉`, `Q = 3`.
    pub fn with_defaults(rank: usize, n0: usize) -> Self {
        Self {
            rank,
            steps: (7.0 * (n0 as f64).sqrt()).ceil() as usize,
            rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdRound {
    /// `w̃ᵀK′w̃` at the resampled start.
    pub objective_start: f64,
    /// Objective under `K′` of the weights kept for this round.
    pub objective_end: f64,
    pub reverted: bool,
    pub columns_used: usize,
}

#[derive(Debug, Clone)]
pub struct LdOutput {
    pub weights: WeightVector,
    pub rounds: Vec<LdRound>,
}

/// Low-rank debiasing: rounds of resampling, weighted pivoted Cholesky, and
/// mirror descent on the low-rank-plus-diagonal surrogate of `K`.
pub fn low_rank_debias<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    params: LdParams,
    rng: &mut R,
) -> Result<LdOutput> {
    let n = oracle.len();
    if n == 0 || params.rank == 0 || params.rank > n || params.steps == 0 || params.rounds == 0 {
        return Err(Error::InvalidArgument(format!(
            "low-rank debiasing needs 1 ≤ r ≤ n, T ≥ 1, Q ≥ 1 (n = {n}, {params:?})"
        )));
    }
    let diag = oracle.diag();
    let mut w = WeightVector::uniform(n);
    let mut trace = Vec::with_capacity(params.rounds);
    for q in 1..=params.rounds {
        let start = resample_stratified(&w, n, rng)?.into_vec();
        let lr = weighted_rpcholesky(oracle, &start, params.rank, rng)?;
        let resid: Vec<f64> = diag.iter().zip(lr.row_norms_sq()).map(|(d, f)| (d - f).max(0.0)).collect();
        let matvec = |x: &[f64], out: &mut [f64]| {
            lr.matvec(x, out);
            for ((o, &xi), &e) in out.iter_mut().zip(x).zip(&resid) {
                *o += e * xi;
            }
        };
        let kdiag: Vec<f64> = lr.row_norms_sq().iter().zip(&resid).map(|(a, b)| a + b).collect();
        let next = amd(matvec, &kdiag, params.steps, &start, q > 1)?;
        let before = quadratic(&matvec, &start);
        let after = quadratic(&matvec, &next);
        let reverted = after > before;
        trace.push(LdRound {
            objective_start: before,
            objective_end: if reverted { before } else { after },
            reverted,
            columns_used: lr.columns_used(),
        });
        w = WeightVector::simplex_normalized(if reverted { start } else { next })?;
    }
    Ok(LdOutput { weights: w, rounds: trace })
}
