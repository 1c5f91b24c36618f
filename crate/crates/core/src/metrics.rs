//! Discrepancy measures: Stein MMD, weighted MMD between two weightings,
//! energy distance, and radii.

use crate::error::{Error, Result};
use crate::kernel::{KernelOracle, PointSet, Preconditioner};
use crate::weights::SUM_TOL;

fn nonzero(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn check_len<K: KernelOracle + ?Sized>(oracle: &K, w: &[f64]) -> Result<()> {
    if w.len() != oracle.len() {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{}", oracle.len()),
            got: format!("{}", w.len()),
        });
    }
    Ok(())
}

/// Quadratic form `wᵀKw` evaluated over the support of `w`.
///
/// Round-off negatives down to `−1e-10·(1 + scale)` are clamped to zero,
/// anything lower means the oracle is not PSD.
pub fn quadratic_form<K: KernelOracle + ?Sized>(oracle: &K, w: &[f64]) -> Result<f64> {
    check_len(oracle, w)?;
    let support = nonzero(w);
    let mut total = 0.0;
    let mut scale = 0.0f64;
    for (a, &i) in support.iter().enumerate() {
        let wi = w[i];
        let kii = oracle.entry(i, i);
        scale = scale.max(kii.abs());
        let mut acc = 0.5 * wi * kii;
        for &j in &support[a + 1..] {
            acc += w[j] * oracle.entry(i, j);
        }
        total += 2.0 * wi * acc;
    }
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * (1.0 + scale * wmax * wmax * support.len() as f64);
    if total < 0.0 {
        if total < -tol {
            return Err(Error::NotPsd(total));
        }
        return Ok(0.0);
    }
    Ok(total)
}

/// Squared MMD between `Σ w_i δ_{x_i}` and the target, for a mean-zero kernel.
pub fn mmd_sq<K: KernelOracle + ?Sized>(oracle: &K, w: &[f64]) -> Result<f64> {
    quadratic_form(oracle, w)
}

/// `(w − v)ᵀ K (w − v)`: squared MMD between two weightings of the same points.
pub fn mmd_sq_between<K: KernelOracle + ?Sized>(oracle: &K, w: &[f64], v: &[f64]) -> Result<f64> {
    check_len(oracle, v)?;
    let diff: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - b).collect();
    quadratic_form(oracle, &diff)
}

fn check_unit_mass(what: &'static str, w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("{n}"),
            got: format!("{}", w.len()),
        });
    }
    if w.iter().any(|&v| !v.is_finite()) || (w.iter().sum::<f64>() - 1.0).abs() > SUM_TOL * 1e3 {
        return Err(Error::InvalidWeights(format!("{what} must be finite and sum to one")));
    }
    Ok(())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_cross_distance(x: &PointSet, w: &[f64], y: &PointSet, v: &[f64]) -> f64 {
    let sx = nonzero(w);
    let sy = nonzero(v);
    let mut total = 0.0;
    for &i in &sx {
        let mut acc = 0.0;
        for &j in &sy {
            acc += v[j] * euclid(x.row(i), y.row(j));
        }
        total += w[i] * acc;
    }
    total
}

/// Two-sample energy distance
/// `2 E‖X−Y‖ − E‖X−X'‖ − E‖Y−Y'‖` between weighted samples.
///
/// Weights may be negative as long as each side sums to one; the distance
/// stays nonnegative for signed measures of equal mass.
pub fn energy_distance(x: &PointSet, w: &[f64], y: &PointSet, v: &[f64]) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::ShapeMismatch {
            what: "energy distance dimension",
            expected: format!("{}", x.dim()),
            got: format!("{}", y.dim()),
        });
    }
    check_unit_mass("first weights", w, x.len())?;
    check_unit_mass("second weights", v, y.len())?;
    let ed = 2.0 * mean_cross_distance(x, w, y, v)
        - mean_cross_distance(x, w, x, w)
        - mean_cross_distance(y, v, y, v);
    if ed < -1e-10 {
        return Err(Error::NotPsd(ed));
    }
    Ok(ed.max(0.0))
}

/// `max_i k(x_i, x_i)`.
pub fn kernel_radius<K: KernelOracle + ?Sized>(oracle: &K) -> Result<f64> {
    oracle
        .diag()
        .into_iter()
        .reduce(f64::max)
        .ok_or_else(|| Error::InvalidArgument("kernel radius of an empty set".into()))
}

/// `max_i ‖x_i‖₂ ∨ 1`.
///
/// The preconditioner is accepted for interface symmetry but the radius is
/// Euclidean.
pub fn point_radius(points: &PointSet, _precond: &Preconditioner) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("point radius of an empty set".into()));
    }
    Ok((0..points.len())
        .map(|i| points.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(1.0, f64::max))
}
