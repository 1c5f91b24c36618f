//! Constant-preserving compression by pivoted Cholesky on a
//! constant-regularized kernel.

use rand::Rng;

use crate::error::{Error, Result};
use crate::greedy::{kt_swap_ls, SwapMode};
use crate::kernel::{materialize, KernelOracle, Offset};
use crate::linalg::{spd_cholesky, spd_solve, DenseMatrix};
use crate::lowrank::weighted_rpcholesky;
use crate::metrics::quadratic_form;
use crate::weights::WeightVector;

/// `K⁻¹1 / (1ᵀK⁻¹1)`, the minimizer of `wᵀKw` subject to `Σw = 1`.
pub fn cp_optimal_weights(k: &DenseMatrix) -> Result<Vec<f64>> {
    let chol = spd_cholesky(k, 0.0)?;
    let y = spd_solve(&chol, &vec![1.0; k.rows()])?;
    let s: f64 = y.iter().sum();
    if !s.is_finite() || s == 0.0 {
        return Err(Error::NotPositiveDefinite(s));
    }
    Ok(y.into_iter().map(|v| v / s).collect())
}

/// Average of the `m` largest entries.
pub fn regularization_offset(diag: &[f64], m: usize) -> f64 {
    let mut d = diag.to_vec();
    d.sort_by(|a, b| b.total_cmp(a));
    let m = m.clamp(1, d.len().max(1));
    d[..m].iter().sum::<f64>() / m as f64
}

fn reweight<K: KernelOracle + ?Sized>(oracle: &K, support: &[usize]) -> Result<Vec<f64>> {
    let n = oracle.len();
    let sub = cp_optimal_weights(&materialize(oracle, support))?;
    let mut w = vec![0.0; n];
    for (&i, v) in support.iter().zip(sub) {
        w[i] = v;
    }
    Ok(w)
}

/// Cholesky Thinning to at most `m` support points with weights that sum
/// to one (negative weights allowed).
pub fn cholesky_thinning<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    w: &WeightVector,
    m: usize,
    rng: &mut R,
) -> Result<WeightVector> {
    let n = oracle.len();
    if m == 0 {
        return Err(Error::InvalidArgument("cholesky thinning needs m ≥ 1".into()));
    }
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{n}"),
            got: format!("{}", w.len()),
        });
    }
    let diag = oracle.diag();
    let c = regularization_offset(&diag, m);
    let lr = weighted_rpcholesky(&Offset::new(oracle, c), w.values(), m, rng)?;
    let mut pivots = lr.pivots().to_vec();
    if pivots.is_empty() {
        pivots.push(crate::greedy::argmin(&diag));
    }
    pivots.sort_unstable();
    let first = WeightVector::constant_preserving_normalized(reweight(oracle, &pivots)?)?;
    let swapped = kt_swap_ls(oracle, &first, SwapMode::ConstantPreserving)?;
    let swapped_val = quadratic_form(oracle, swapped.values())?;
    let support = swapped.support();
    let polished = match reweight(oracle, &support) {
        Ok(v) => Some(WeightVector::constant_preserving_normalized(v)?),
        Err(Error::NotPositiveDefinite(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(match polished {
        Some(p) if quadratic_form(oracle, p.values())? <= swapped_val => p,
        _ => WeightVector::constant_preserving_normalized(swapped.into_vec())?,
    })
}
