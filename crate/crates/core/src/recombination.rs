//! Carathéodory-style recombination and Recombination Thinning.

use rand::Rng;

use crate::error::{Error, Result};
use crate::greedy::{kt_swap_ls, SwapMode};
use crate::kernel::{materialize, KernelOracle};
use crate::linalg::{dot, spd_cholesky, spd_solve, svd_null_rows, DenseMatrix};
use crate::lowrank::{amd, weighted_rpcholesky};
use crate::resample::resample_stratified;
use crate::weights::WeightVector;

const POSITIVE_REL: f64 = 1e-12;
const NULL_TOL: f64 = 1e-10;

/// Moves `x0` to a vertex of `{x ≥ 0 : Ax = Ax0}`, leaving at most
/// `rank(A)` nonzero coordinates.
pub fn find_bfs(a: &DenseMatrix, x0: &[f64]) -> Result<Vec<f64>> {
    let k = a.cols();
    if x0.len() != k {
        return Err(Error::ShapeMismatch {
            what: "recombination weights",
            expected: format!("{k}"),
            got: format!("{}", x0.len()),
        });
    }
    if x0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidWeights("recombination needs nonnegative weights".into()));
    }
    if k > 0 && !(0..a.rows()).any(|r| a.row(r).iter().all(|&v| v > 0.0)) {
        return Err(Error::Recombination("no row of the moment matrix is strictly positive".into()));
    }
    let mut x = x0.to_vec();
    let mut null = svd_null_rows(a, NULL_TOL);
    for idx in 0..null.len() {
        let v = std::mem::take(&mut null[idx]);
        let vmax = v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if vmax == 0.0 {
            return Err(Error::Recombination("null vector vanished during elimination".into()));
        }
        let eps = POSITIVE_REL * vmax;
        let mut best: Option<(usize, f64)> = None;
        for (j, (&xj, &vj)) in x.iter().zip(&v).enumerate() {
            if vj > eps {
                let ratio = xj / vj;
                if best.is_none_or(|(_, b)| ratio < b) {
                    best = Some((j, ratio));
                }
            }
        }
        let (kk, theta) = best.ok_or_else(|| {
            Error::Recombination("null vector has no positive coordinate".into())
        })?;
        for (xj, &vj) in x.iter_mut().zip(&v) {
            *xj = (*xj - theta * vj).max(0.0);
        }
        x[kk] = 0.0;
        let vk = v[kk];
        for u in null.iter_mut().skip(idx + 1) {
            let c = u[kk] / vk;
            if c != 0.0 {
                for (ue, &ve) in u.iter_mut().zip(&v) {
                    *ue -= c * ve;
                }
            }
            u[kk] = 0.0;
        }
    }
    Ok(x)
}

fn select_columns(a: &DenseMatrix, cols: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), cols.len());
    for r in 0..a.rows() {
        let src = a.row(r);
        for (c, &j) in cols.iter().enumerate() {
            out[(r, c)] = src[j];
        }
    }
    out
}

/// Reduces `x0 ≥ 0` to at most `m` (rows of `A`) nonzeros while preserving
/// `Ax0`. Requires one row of `A` to be strictly positive.
pub fn recombination(a: &DenseMatrix, x0: &[f64]) -> Result<Vec<f64>> {
    let m = a.rows();
    let n = a.cols();
    if x0.len() != n {
        return Err(Error::ShapeMismatch {
            what: "recombination weights",
            expected: format!("{n}"),
            got: format!("{}", x0.len()),
        });
    }
    if m == 0 {
        return Err(Error::InvalidArgument("recombination needs at least one moment".into()));
    }
    let mut x = x0.to_vec();
    loop {
        let support: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
        if support.len() <= 2 * m {
            break;
        }
        let blocks = 2 * m;
        let (base, extra) = (support.len() / blocks, support.len() % blocks);
        let mut bounds = Vec::with_capacity(blocks + 1);
        bounds.push(0);
        for b in 0..blocks {
            bounds.push(bounds[b] + base + usize::from(b < extra));
        }
        let mut agg = DenseMatrix::zeros(m, blocks);
        for b in 0..blocks {
            for &i in &support[bounds[b]..bounds[b + 1]] {
                for r in 0..m {
                    agg[(r, b)] += a[(r, i)] * x[i];
                }
            }
        }
        let xhat = find_bfs(&agg, &vec![1.0; blocks])?;
        for b in 0..blocks {
            let s = if xhat[b] > 0.0 { xhat[b] } else { 0.0 };
            for &i in &support[bounds[b]..bounds[b + 1]] {
                x[i] *= s;
            }
        }
    }
    let support: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    if support.len() > m {
        let sub = select_columns(a, &support);
        let xs: Vec<f64> = support.iter().map(|&i| x[i]).collect();
        let reduced = find_bfs(&sub, &xs)?;
        for (&i, v) in support.iter().zip(reduced) {
            x[i] = v;
        }
    }
    Ok(x)
}

fn objective(k: &DenseMatrix, w: &[f64]) -> f64 {
    dot(w, &k.matvec(w))
}

/// `min_{w ∈ Δ} wᵀKw` for a small PSD `K`: mirror descent, then an
/// equality-constrained polish on the detected support. Never returns
/// anything worse than `warm` (or uniform weights when `warm` is `None`).
pub fn simplex_qp(k: &DenseMatrix, warm: Option<&[f64]>) -> Result<Vec<f64>> {
    let q = k.rows();
    if q == 0 || !k.is_square() {
        return Err(Error::InvalidArgument("simplex QP needs a nonempty square matrix".into()));
    }
    let start = match warm {
        Some(w) if w.len() == q => w.to_vec(),
        Some(w) => {
            return Err(Error::ShapeMismatch {
                what: "warm start",
                expected: format!("{q}"),
                got: format!("{}", w.len()),
            })
        }
        None => vec![1.0 / q as f64; q],
    };
    let diag = k.diag();
    let steps = (500 * q).max(5000);
    let md = amd(|x: &[f64], out: &mut [f64]| out.copy_from_slice(&k.matvec(x)), &diag, steps, &start, false)?;
    let mut best = (objective(k, &start), start);
    let md_val = objective(k, &md);
    if md_val < best.0 {
        best = (md_val, md.clone());
    }
    let support: Vec<usize> = (0..q).filter(|&i| md[i] > 1e-10).collect();
    if let Some(w) = kkt_on_support(k, &support)? {
        let v = objective(k, &w);
        if w.iter().all(|&x| x >= 0.0) && v < best.0 {
            best = (v, w);
        }
    }
    Ok(best.1)
}

fn kkt_on_support(k: &DenseMatrix, support: &[usize]) -> Result<Option<Vec<f64>>> {
    if support.is_empty() {
        return Ok(None);
    }
    let sub = k.principal_submatrix(support);
    let Ok(chol) = spd_cholesky(&sub, 0.0) else {
        return Ok(None);
    };
    let y = spd_solve(&chol, &vec![1.0; support.len()])?;
    let s: f64 = y.iter().sum();
    if !(s.abs() > 0.0) || !s.is_finite() {
        return Ok(None);
    }
    let mut w = vec![0.0; k.rows()];
    for (&i, yi) in support.iter().zip(y) {
        w[i] = yi / s;
    }
    Ok(Some(w))
}

/// Recombination Thinning to at most `m` support points with simplex
/// weights.
pub fn recombination_thinning<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    w: &WeightVector,
    m: usize,
    rng: &mut R,
) -> Result<WeightVector> {
    let n = oracle.len();
    if m < 2 {
        return Err(Error::InvalidArgument("recombination thinning needs m ≥ 2".into()));
    }
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{n}"),
            got: format!("{}", w.len()),
        });
    }
    let tilde = resample_stratified(w, n, rng)?.into_vec();
    let lr = weighted_rpcholesky(oracle, &tilde, m - 1, rng)?;
    let support: Vec<usize> = (0..n).filter(|&i| tilde[i] > 0.0).collect();
    let moments = moment_matrix(lr.factor(), &support);
    let xs: Vec<f64> = support.iter().map(|&i| tilde[i]).collect();
    let reduced = recombination(&moments, &xs)?;
    let mut wp = vec![0.0; n];
    for (&i, v) in support.iter().zip(reduced) {
        wp[i] = v;
    }
    let wp = WeightVector::simplex_normalized(wp)?;
    let swapped = kt_swap_ls(oracle, &wp, SwapMode::Simplex)?;
    let j = swapped.support();
    let kj = materialize(oracle, &j);
    let warm: Vec<f64> = j.iter().map(|&i| swapped.values()[i]).collect();
    let opt = simplex_qp(&kj, Some(&warm))?;
    let mut out = vec![0.0; n];
    for (&i, v) in j.iter().zip(opt) {
        out[i] = v;
    }
    WeightVector::simplex_normalized(out)
}

/// `[F, 1]ᵀ` restricted to the columns in `support`.
pub fn moment_matrix(f: &DenseMatrix, support: &[usize]) -> DenseMatrix {
    let r = f.cols();
    let mut a = DenseMatrix::zeros(r + 1, support.len());
    for (c, &i) in support.iter().enumerate() {
        for (k, &v) in f.row(i).iter().enumerate() {
            a[(k, c)] = v;
        }
        a[(r, c)] = 1.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DenseKernel;
    use crate::metrics::mmd_sq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn residual(a: &DenseMatrix, x: &[f64], x0: &[f64]) -> (f64, f64) {
        let ax = a.matvec(x);
        let ax0 = a.matvec(x0);
        let err = ax.iter().zip(&ax0).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = ax0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (err, scale)
    }

    fn random_system(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (DenseMatrix, Vec<f64>) {
        let mut a = DenseMatrix::zeros(m, n);
        for r in 0..m - 1 {
            for c in 0..n {
                a[(r, c)] = rng.sample(StandardNormal);
            }
        }
        for c in 0..n {
            a[(m - 1, c)] = 1.0;
        }
        let x0 = (0..n).map(|_| rng.random::<f64>()).collect();
        (a, x0)
    }

    #[test]
    fn bfs_single_row() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let x = find_bfs(&a, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(x.iter().filter(|&&v| v > 0.0).count(), 1);
        assert!((x.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bfs_full_rank_is_identity() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(find_bfs(&a, &[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn bfs_requires_positive_row() {
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0, 0.5]]).unwrap();
        assert!(matches!(find_bfs(&a, &[1.0, 1.0, 1.0]), Err(Error::Recombination(_))));
    }

    #[test]
    fn bfs_contract_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (a, x0) = random_system(&mut rng, 3, 8);
            let x = find_bfs(&a, &x0).unwrap();
            let (err, scale) = residual(&a, &x, &x0);
            assert!(err <= 1e-8 * (1.0 + scale));
            assert!(x.iter().all(|&v| v >= 0.0));
            assert!(x.iter().filter(|&&v| v != 0.0).count() <= 3);
        }
    }

    #[test]
    fn recombination_passthrough_and_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, x0) = random_system(&mut rng, 4, 4);
        assert_eq!(recombination(&a, &x0).unwrap(), x0);
        let (a, x0) = random_system(&mut rng, 2, 100);
        let x = recombination(&a, &x0).unwrap();
        let (err, scale) = residual(&a, &x, &x0);
        assert!(err <= 1e-8 * (1.0 + scale));
        assert!(x.iter().filter(|&&v| v > 0.0).count() <= 2);
    }

    #[test]
    fn recombination_halves_support_per_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, x0) = random_system(&mut rng, 3, 96);
        // One round on 96 points with 6 blocks of 16 leaves at most 3 blocks.
        let blocks = 6;
        let mut agg = DenseMatrix::zeros(3, blocks);
        for b in 0..blocks {
            for i in b * 16..(b + 1) * 16 {
                for r in 0..3 {
                    agg[(r, b)] += a[(r, i)] * x0[i];
                }
            }
        }
        let xhat = find_bfs(&agg, &[1.0; 6]).unwrap();
        let survivors = xhat.iter().filter(|&&v| v > 0.0).count();
        assert!(survivors * 16 <= 48);
        let x = recombination(&a, &x0).unwrap();
        assert!(x.iter().filter(|&&v| v > 0.0).count() <= 3);
    }

    #[test]
    fn qp_closed_forms() {
        let w = simplex_qp(&DenseMatrix::identity(5), None).unwrap();
        assert!(w.iter().all(|&v| (v - 0.2).abs() < 1e-9));
        let k = DenseMatrix::from_diag(&[1.0, 4.0]);
        let w = simplex_qp(&k, None).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-10 && (w[1] - 0.2).abs() < 1e-10);
        assert!((objective(&k, &w) - 0.8).abs() < 1e-10);
    }

    #[test]
    fn qp_beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = DenseMatrix::from_vec(8, 4, (0..32).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let k = g.matmul(&g.transpose()).unwrap();
        let w = simplex_qp(&k, None).unwrap();
        let v = objective(&k, &w);
        let tol = 1e-8 * k.diag().iter().cloned().fold(0.0, f64::max);
        for _ in 0..100_000 {
            let mut r: Vec<f64> = (0..8).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|x| *x /= s);
            assert!(v <= objective(&k, &r) + tol);
        }
    }

    #[test]
    fn rt_low_rank_capture_is_near_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DenseMatrix::from_vec(20, 3, (0..60).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let k = DenseKernel::new(g.matmul(&g.transpose()).unwrap()).unwrap();
        let w = WeightVector::uniform(20);
        let out = recombination_thinning(&k, &w, 5, &mut rng).unwrap();
        assert!(out.nnz() <= 5);
        assert!(mmd_sq(&k, out.values()).unwrap() <= mmd_sq(&k, w.values()).unwrap() + 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn recombination_contract(seed in 0u64..10_000, m in 2usize..6, n in 1usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, mut x0) = random_system(&mut rng, m, n);
            for v in x0.iter_mut() {
                if rng.random::<f64>() < 0.2 { *v = 0.0; }
            }
            let x = recombination(&a, &x0).unwrap();
            let (err, scale) = residual(&a, &x, &x0);
            prop_assert!(err <= 1e-8 * (1.0 + scale));
            prop_assert!(x.iter().all(|&v| v >= 0.0));
            prop_assert!(x.iter().filter(|&&v| v > 0.0).count() <= m);
        }
    }
}
