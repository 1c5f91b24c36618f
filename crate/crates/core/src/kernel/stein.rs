use log::warn;

use super::{BaseKernelSpec, KernelOracle, PointSet, Preconditioner, ScoreSet};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::pipelines::standard_thin;

/// Langevin Stein kernel with cached per-point quantities.
///
/// For a radial base kernel `κ(‖x−y‖²_M)` the Stein kernel has the closed
/// form
///
/// ```text
/// k_p(x,y) = ⟨s_x, M s_y⟩ κ(t) − 2κ'(t) ⟨x−y, s_x−s_y⟩ − 4κ''(t) t − 2d κ'(t),
/// t = ‖L⁻¹(x−y)‖²,
/// ```
///
/// so after caching `L⁻¹x_i` and `M s_i` each entry costs `O(d)`.
#[derive(Debug, Clone)]
pub struct SteinKernel {
    base: BaseKernelSpec,
    precond: Preconditioner,
    points: PointSet,
    scores: ScoreSet,
    whitened: Vec<f64>,
    m_scores: Vec<f64>,
    diag: Vec<f64>,
}

impl SteinKernel {
    pub fn new(
        points: PointSet,
        scores: ScoreSet,
        base: BaseKernelSpec,
        precond: Preconditioner,
    ) -> Result<Self> {
        let (n, d) = (points.len(), points.dim());
        if scores.len() != n || scores.dim() != d {
            return Err(Error::ShapeMismatch {
                what: "scores",
                expected: format!("{n}x{d}"),
                got: format!("{}x{}", scores.len(), scores.dim()),
            });
        }
        if precond.dim() != d {
            return Err(Error::ShapeMismatch {
                what: "preconditioner",
                expected: format!("{d}x{d}"),
                got: format!("{0}x{0}", precond.dim()),
            });
        }
        let mut whitened = Vec::with_capacity(n * d);
        let mut m_scores = Vec::with_capacity(n * d);
        for i in 0..n {
            whitened.extend(precond.whiten(points.row(i)));
            m_scores.extend(precond.apply(scores.row(i)));
        }
        let (k0, dk0, _) = base.profile(0.0);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let s = scores.row(i);
            let ms = &m_scores[i * d..(i + 1) * d];
            let v = dot(s, ms) * k0 - 2.0 * d as f64 * dk0;
            if v < 0.0 {
                if v < -1e-10 {
                    return Err(Error::NotPsd(v));
                }
                warn!("clamping Stein kernel diagonal entry {i} from {v:e} to 0");
                diag.push(0.0);
            } else {
                diag.push(v);
            }
        }
        Ok(Self {
            base,
            precond,
            points,
            scores,
            whitened,
            m_scores,
            diag,
        })
    }

    pub fn base(&self) -> &BaseKernelSpec {
        &self.base
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        &self.precond
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn scores(&self) -> &ScoreSet {
        &self.scores
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn diag_entries(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        let (xi, xj) = (self.points.row(i), self.points.row(j));
        let (si, sj) = (self.scores.row(i), self.scores.row(j));
        let wi = &self.whitened[i * d..(i + 1) * d];
        let wj = &self.whitened[j * d..(j + 1) * d];
        let msj = &self.m_scores[j * d..(j + 1) * d];

        let mut t = 0.0;
        let mut cross = 0.0;
        let mut inner = 0.0;
        for c in 0..d {
            let dw = wi[c] - wj[c];
            t += dw * dw;
            cross += (xi[c] - xj[c]) * (si[c] - sj[c]);
            inner += si[c] * msj[c];
        }
        let (k, dk, d2k) = self.base.profile(t);
        inner * k - 2.0 * dk * cross - 4.0 * d2k * t - 2.0 * d as f64 * dk
    }
}

impl KernelOracle for SteinKernel {
    fn len(&self) -> usize {
        self.points.len()
    }

    /// `O(d)` evaluation; arguments are put in canonical order so the result
    /// is exactly symmetric.
    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i < j {
            self.pair(i, j)
        } else {
            self.pair(j, i)
        }
    }

    fn diag(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

/// Stein kernel between two explicit points with their scores, without any
/// cache.
pub fn stein_eval_points(
    base: &BaseKernelSpec,
    precond: &Preconditioner,
    x: &[f64],
    y: &[f64],
    sx: &[f64],
    sy: &[f64],
) -> f64 {
    let d = x.len();
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let wd = precond.whiten(&diff);
    let t = dot(&wd, &wd);
    let msy = precond.apply(sy);
    let sdiff: Vec<f64> = sx.iter().zip(sy).map(|(a, b)| a - b).collect();
    let (k, dk, d2k) = base.profile(t);
    dot(sx, &msy) * k - 2.0 * dk * dot(&diff, &sdiff) - 4.0 * d2k * t - 2.0 * d as f64 * dk
}

/// Median heuristic: squared median pairwise `‖·‖_M` distance over a
/// standard-thinned subset of at most `subset_size` points.
///
/// Even counts use the lower-middle element. A zero median falls back to the
/// mean distance.
pub fn median_bandwidth(points: &PointSet, precond: &Preconditioner, subset_size: usize) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument("median bandwidth needs at least two points".into()));
    }
    let keep = standard_thin(n, subset_size.clamp(2, n));
    let whitened: Vec<Vec<f64>> = keep.iter().map(|&i| precond.whiten(points.row(i))).collect();
    let mut dists = Vec::with_capacity(keep.len() * (keep.len() - 1) / 2);
    for a in 0..whitened.len() {
        for b in (a + 1)..whitened.len() {
            let t: f64 = whitened[a]
                .iter()
                .zip(&whitened[b])
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            dists.push(t.sqrt());
        }
    }
    let mid = (dists.len() - 1) / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let mut sigma = *median;
    if sigma == 0.0 {
        sigma = dists.iter().sum::<f64>() / dists.len() as f64;
    }
    if sigma == 0.0 {
        return Err(Error::DegeneratePointSet);
    }
    Ok(sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::super::KernelFamily;
    use super::*;
    use crate::linalg::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn single(x: f64, s: f64, family: KernelFamily) -> SteinKernel {
        SteinKernel::new(
            PointSet::new(vec![x], 1, 1).unwrap(),
            ScoreSet::new(vec![s], 1, 1).unwrap(),
            BaseKernelSpec::new(family, 1.0).unwrap(),
            Preconditioner::identity(1),
        )
        .unwrap()
    }

    fn random_kernel(n: usize, d: usize, seed: u64, family: KernelFamily) -> SteinKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut m = DenseMatrix::identity(d);
        if d > 1 {
            m[(0, 1)] = 0.3;
            m[(1, 0)] = 0.3;
            m[(0, 0)] = 1.5;
        }
        // Score of a correlated Gaussian N(0, Σ) with Σ⁻¹ = m.
        let scores: Vec<f64> = (0..n)
            .flat_map(|i| {
                let x = &xs[i * d..(i + 1) * d];
                m.matvec(x).into_iter().map(|v| -v).collect::<Vec<_>>()
            })
            .collect();
        SteinKernel::new(
            PointSet::new(xs, n, d).unwrap(),
            ScoreSet::new(scores, n, d).unwrap(),
            BaseKernelSpec::new(family, 1.3).unwrap(),
            Preconditioner::new(m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn diag_at_mode_imq_and_gaussian() {
        assert_eq!(single(0.0, 0.0, KernelFamily::Imq).diag(), vec![1.0]);
        assert_eq!(single(0.0, 0.0, KernelFamily::Gaussian).diag(), vec![1.0]);
    }

    #[test]
    fn diag_matches_direct_recomputation() {
        for family in [KernelFamily::Imq, KernelFamily::Gaussian] {
            let k = random_kernel(10, 2, 1, family);
            for i in 0..10 {
                let direct = stein_eval_points(
                    k.base(),
                    k.preconditioner(),
                    k.points().row(i),
                    k.points().row(i),
                    k.scores().row(i),
                    k.scores().row(i),
                );
                assert!((k.diag()[i] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
                assert_eq!(k.entry(i, i), k.diag()[i]);
            }
        }
    }

    #[test]
    fn entry_is_symmetric() {
        let k = random_kernel(20, 3, 2, KernelFamily::Imq);
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(k.entry(i, j), k.entry(j, i));
            }
        }
    }

    #[test]
    fn cached_path_matches_direct_path() {
        let k = random_kernel(40, 3, 4, KernelFamily::Imq);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let i = rng.random_range(0..40);
            let j = rng.random_range(0..40);
            let direct = stein_eval_points(
                k.base(),
                k.preconditioner(),
                k.points().row(i),
                k.points().row(j),
                k.scores().row(i),
                k.scores().row(j),
            );
            assert!((k.entry(i, j) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn points_formula_hand_cases() {
        let base = BaseKernelSpec::new(KernelFamily::Imq, 1.0).unwrap();
        let p = Preconditioner::identity(1);
        assert_eq!(stein_eval_points(&base, &p, &[0.0], &[0.0], &[2.0], &[2.0]), 5.0);
        let p3 = Preconditioner::identity(3);
        let z = [0.3, -1.0, 2.0];
        let v = stein_eval_points(&base, &p3, &z, &z, &[0.0; 3], &[0.0; 3]);
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_diag_is_impossible_for_valid_inputs() {
        let k = random_kernel(50, 4, 5, KernelFamily::Gaussian);
        assert!(k.diag().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn median_bandwidth_cases() {
        let p = Preconditioner::identity(1);
        let pts = PointSet::new(vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        assert_eq!(median_bandwidth(&pts, &p, 1000).unwrap(), 1.0);
        let pts = PointSet::new(vec![0.0, 3.0], 2, 1).unwrap();
        assert_eq!(median_bandwidth(&pts, &p, 1000).unwrap(), 9.0);
        let pts = PointSet::new(vec![1.0; 5], 5, 1).unwrap();
        assert!(matches!(median_bandwidth(&pts, &p, 1000), Err(Error::DegeneratePointSet)));
    }

    #[test]
    fn median_bandwidth_zero_median_falls_back_to_mean() {
        // Distances {0,0,0,3,3,3}: lower-middle is 0, mean is 1.5.
        let p = Preconditioner::identity(1);
        let pts = PointSet::new(vec![0.0, 0.0, 0.0, 3.0], 4, 1).unwrap();
        assert!((median_bandwidth(&pts, &p, 1000).unwrap() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = SteinKernel::new(
            PointSet::new(vec![0.0, 1.0], 2, 1).unwrap(),
            ScoreSet::new(vec![0.0], 1, 1).unwrap(),
            BaseKernelSpec::new(KernelFamily::Imq, 1.0).unwrap(),
            Preconditioner::identity(1),
        );
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }
}
