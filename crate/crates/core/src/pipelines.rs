//! End-to-end compression pipelines.

use std::cell::{Cell, OnceCell};

use rand::Rng;

use crate::cholesky_thinning::{cholesky_thinning, cp_optimal_weights};
use crate::error::{Error, Result};
use crate::greedy::stein_thinning;
use crate::kernel::KernelOracle;
use crate::kt::{kernel_thinning, kt_compresspp};
use crate::linalg::{dot, DenseMatrix};
use crate::lowrank::{amd, low_rank_debias, LdParams};
use crate::recombination::recombination_thinning;
use crate::resample::resample_stratified;
use crate::weights::WeightVector;

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_OVERSAMPLING: u32 = 4;
pub const DEFAULT_ROUNDS: usize = 3;

/// Keeps the last point of each of `n0` stride blocks: indices `s·j − 1`
/// for `j = 1..n0` with `s = ⌊n/n0⌋`.
pub fn standard_thin(n: usize, n0: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let n0 = n0.clamp(1, n);
    let s = n / n0;
    (1..=n0).map(|j| s * j - 1).collect()
}

/// Smallest `m·2^k ≥ n`.
pub fn skt_multiset_size(n: usize, m: usize) -> usize {
    let mut size = m;
    while size < n {
        size *= 2;
    }
    size
}

/// Smallest power of four `≥ n`.
pub fn lskt_multiset_size(n: usize) -> usize {
    let mut size = 1;
    while size < n {
        size *= 4;
    }
    size
}

/// Stein Kernel Thinning: Stein thinning to `m·2^⌈log₂(n/m)⌉` points, then
/// kernel thinning down to `m`.
pub fn skt<K: KernelOracle + ?Sized, R: Rng + ?Sized>(oracle: &K, m: usize, delta: f64, rng: &mut R) -> Result<WeightVector> {
    let n = oracle.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("output size {m} must lie in 1..={n}")));
    }
    let n_prime = skt_multiset_size(n, m);
    let (_, w) = stein_thinning(oracle, n_prime)?;
    kernel_thinning(oracle, &w, m, delta, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsktParams {
    pub ld: LdParams,
    pub oversampling: u32,
    pub delta: f64,
}

/// Low-rank SKT: low-rank debiasing, resampling to `n′ = 4^⌈log₄ n⌉`
/// points, then KT-Compress++ to `√n′` points.
pub fn lskt<K: KernelOracle + ?Sized, R: Rng + ?Sized>(oracle: &K, params: LsktParams, rng: &mut R) -> Result<WeightVector> {
    let w = low_rank_debias(oracle, params.ld, rng)?.weights;
    let n_prime = lskt_multiset_size(oracle.len());
    let w = resample_stratified(&w, n_prime, rng)?;
    kt_compresspp(oracle, &w, params.oversampling, params.delta / 3.0, rng)
}

/// Holds the size-`n` Stein thinning output so that recombination and
/// Cholesky pipelines run on the same oracle share it.
pub struct Session<'a, K: ?Sized> {
    oracle: &'a K,
    stein: OnceCell<WeightVector>,
    stein_runs: Cell<usize>,
}

impl<'a, K: KernelOracle + ?Sized> Session<'a, K> {
    pub fn new(oracle: &'a K) -> Self {
        Self {
            oracle,
            stein: OnceCell::new(),
            stein_runs: Cell::new(0),
        }
    }

    pub fn oracle(&self) -> &'a K {
        self.oracle
    }

    /// Stein thinning with output size `n`, computed at most once.
    pub fn stein_thinned(&self) -> Result<&WeightVector> {
        if let Some(w) = self.stein.get() {
            return Ok(w);
        }
        let (_, w) = stein_thinning(self.oracle, self.oracle.len())?;
        self.stein_runs.set(self.stein_runs.get() + 1);
        Ok(self.stein.get_or_init(|| w))
    }

    /// How many times Stein thinning actually ran.
    pub fn stein_runs(&self) -> usize {
        self.stein_runs.get()
    }

    /// Debiased simplex weights: low-rank debiasing when `low_rank` is
    /// given, otherwise the cached Stein thinning weights.
    pub fn debiased<R: Rng + ?Sized>(&self, low_rank: Option<LdParams>, rng: &mut R) -> Result<WeightVector> {
        match low_rank {
            Some(p) => Ok(low_rank_debias(self.oracle, p, rng)?.weights),
            None => {
                let w = self.stein_thinned()?;
                WeightVector::simplex_normalized(w.values().to_vec())
            }
        }
    }

    pub fn stein_recombination<R: Rng + ?Sized>(&self, m: usize, low_rank: Option<LdParams>, rng: &mut R) -> Result<WeightVector> {
        let w = self.debiased(low_rank, rng)?;
        recombination_thinning(self.oracle, &w, m, rng)
    }

    pub fn stein_cholesky<R: Rng + ?Sized>(&self, m: usize, low_rank: Option<LdParams>, rng: &mut R) -> Result<WeightVector> {
        let w = self.debiased(low_rank, rng)?;
        cholesky_thinning(self.oracle, &w, m, rng)
    }
}

/// (Low-rank) Stein Recombination: simplex weights on at most `m` points.
pub fn stein_recombination<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    m: usize,
    low_rank: Option<LdParams>,
    rng: &mut R,
) -> Result<WeightVector> {
    Session::new(oracle).stein_recombination(m, low_rank, rng)
}

/// (Low-rank) Stein Cholesky: constant-preserving weights on at most `m`
/// points.
pub fn stein_cholesky<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    m: usize,
    low_rank: Option<LdParams>,
    rng: &mut R,
) -> Result<WeightVector> {
    Session::new(oracle).stein_cholesky(m, low_rank, rng)
}

/// Reference minimizer of `wᵀKw` over the simplex for a dense `K`:
/// `iters` steps of mirror descent followed by an equality-constrained
/// polish on the detected support, keeping whichever is better.
pub fn full_debias_oracle(k: &DenseMatrix, iters: usize) -> Result<Vec<f64>> {
    let n = k.rows();
    if n == 0 || !k.is_square() {
        return Err(Error::InvalidArgument("full debiasing needs a nonempty square matrix".into()));
    }
    let diag = k.diag();
    let matvec = |x: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(k.row(i), x);
        }
    };
    let w = amd(matvec, &diag, iters, &vec![1.0 / n as f64; n], false)?;
    let obj = |v: &[f64]| dot(v, &k.matvec(v));
    let mut best = (obj(&w), w);
    let mut support: Vec<usize> = (0..n).filter(|&i| best.1[i] > 1e-8 / n as f64).collect();
    // A few active-set passes: drop coordinates the polish makes negative.
    for _ in 0..20 {
        if support.is_empty() {
            break;
        }
        let sub = k.principal_submatrix(&support);
        let Ok(v) = cp_optimal_weights(&sub) else {
            break;
        };
        if v.iter().all(|&x| x >= 0.0) {
            let mut full = vec![0.0; n];
            for (&i, x) in support.iter().zip(v) {
                full[i] = x;
            }
            let val = obj(&full);
            if val < best.0 {
                best = (val, full);
            }
            break;
        }
        support = support.into_iter().zip(v).filter(|(_, x)| *x > 0.0).map(|(i, _)| i).collect();
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{BaseKernelSpec, KernelFamily, PointSet, Preconditioner, ScoreSet, SteinKernel};
    use crate::weights::WeightKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn kernel(n: usize, shift: f64, seed: u64) -> SteinKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        let s = x.iter().map(|v| -v).collect();
        SteinKernel::new(
            PointSet::new(x, n, 1).unwrap(),
            ScoreSet::new(s, n, 1).unwrap(),
            BaseKernelSpec::new(KernelFamily::Imq, 1.0).unwrap(),
            Preconditioner::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn standard_thin_examples() {
        assert_eq!(standard_thin(10, 5), vec![1, 3, 5, 7, 9]);
        assert_eq!(standard_thin(4, 4), vec![0, 1, 2, 3]);
        assert_eq!(standard_thin(10, 3), vec![2, 5, 8]);
    }

    #[test]
    fn multiset_sizes() {
        assert_eq!(skt_multiset_size(10, 2), 16);
        assert_eq!(skt_multiset_size(16, 4), 16);
        assert_eq!(lskt_multiset_size(10), 16);
        assert_eq!(lskt_multiset_size(4096), 4096);
        assert_eq!((lskt_multiset_size(4096) as f64).sqrt(), 64.0);
    }

    #[test]
    fn skt_output_kind() {
        let k = kernel(40, 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = skt(&k, 5, DEFAULT_DELTA, &mut rng).unwrap();
        assert_eq!(w.kind(), WeightKind::EqualMultiset(5));
        w.validate().unwrap();
    }

    #[test]
    fn lskt_output_kind() {
        let k = kernel(10, 0.5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = LsktParams {
            ld: LdParams::with_defaults(4, 10),
            oversampling: DEFAULT_OVERSAMPLING,
            delta: DEFAULT_DELTA,
        };
        let w = lskt(&k, params, &mut rng).unwrap();
        assert_eq!(w.kind(), WeightKind::EqualMultiset(4));
    }

    #[test]
    fn session_reuses_stein_thinning() {
        let k = kernel(60, 1.0, 3);
        let session = Session::new(&k);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sr = session.stein_recombination(6, None, &mut rng).unwrap();
        let sc = session.stein_cholesky(6, None, &mut rng).unwrap();
        assert_eq!(session.stein_runs(), 1);
        assert_eq!(sr.kind(), WeightKind::Simplex);
        assert_eq!(sc.kind(), WeightKind::ConstantPreserving);
        assert!(sr.nnz() <= 6 && sc.nnz() <= 6);
        let lsr = session.stein_recombination(6, Some(LdParams::with_defaults(6, 60)), &mut rng).unwrap();
        assert!(lsr.nnz() <= 6);
        assert_eq!(session.stein_runs(), 1);
    }

    #[test]
    fn full_debias_closed_forms() {
        let w = full_debias_oracle(&DenseMatrix::identity(4), 1000).unwrap();
        assert!(w.iter().all(|&v| (v - 0.25).abs() < 1e-12));
        let w = full_debias_oracle(&DenseMatrix::from_diag(&[1.0, 2.0, 4.0]), 1000).unwrap();
        let inv = [1.0, 0.5, 0.25];
        let s: f64 = inv.iter().sum();
        for (a, b) in w.iter().zip(inv) {
            assert!((a - b / s).abs() < 1e-12);
        }
    }
}
