//! Resampling a simplex weight vector to an equal-weight multiset.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelOracle;
use crate::weights::WeightVector;

/// Counts this close to an integer are snapped to it before flooring.
const SNAP: f64 = 1e-9;

fn check(w: &[f64], m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("resample size must be at least 1".into()));
    }
    if w.is_empty() || w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidWeights("resampling needs nonnegative finite weights".into()));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// Cumulative sums with the last entry forced to exactly 1.
fn cdf(p: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        c.push(acc);
    }
    if let Some(last) = p.iter().rposition(|&v| v > 0.0) {
        for v in &mut c[last..] {
            *v = 1.0;
        }
    }
    c
}

/// `min{i : u < C_i}`; zero-mass indices are never returned.
fn inverse_cdf(c: &[f64], u: f64) -> usize {
    c.partition_point(|&v| v <= u).min(c.len() - 1)
}

/// Deterministic floor part and the residual law `η`.
fn split_residual(w: &[f64], m: usize) -> (Vec<usize>, usize, Vec<f64>) {
    let mf = m as f64;
    let mut counts = Vec::with_capacity(w.len());
    let mut frac = Vec::with_capacity(w.len());
    for &v in w {
        let x = v * mf;
        let r = x.round();
        let f = if (x - r).abs() <= SNAP { r } else { x.floor() };
        counts.push(f as usize);
        frac.push((x - f).max(0.0));
    }
    let used: usize = counts.iter().sum();
    let r = m.saturating_sub(used);
    let total: f64 = frac.iter().sum();
    let eta = if r > 0 && total > 0.0 {
        frac.iter().map(|f| f / total).collect()
    } else {
        vec![0.0; w.len()]
    };
    (counts, r, eta)
}

pub fn resample_iid<R: Rng + ?Sized>(w: &WeightVector, m: usize, rng: &mut R) -> Result<WeightVector> {
    check(w.values(), m)?;
    let c = cdf(w.values());
    let mut counts = vec![0usize; w.len()];
    for _ in 0..m {
        counts[inverse_cdf(&c, rng.random())] += 1;
    }
    WeightVector::from_counts(&counts)
}

pub fn resample_residual<R: Rng + ?Sized>(w: &WeightVector, m: usize, rng: &mut R) -> Result<WeightVector> {
    check(w.values(), m)?;
    let (mut counts, r, eta) = split_residual(w.values(), m);
    if r > 0 {
        let c = cdf(&eta);
        for _ in 0..r {
            counts[inverse_cdf(&c, rng.random())] += 1;
        }
    }
    WeightVector::from_counts(&counts)
}

/// Residual resampling whose `r` residual draws use one uniform per
/// stratum `[(j−1)/r, j/r)`.
pub fn resample_stratified<R: Rng + ?Sized>(w: &WeightVector, m: usize, rng: &mut R) -> Result<WeightVector> {
    check(w.values(), m)?;
    let (mut counts, r, eta) = split_residual(w.values(), m);
    if r > 0 {
        let c = cdf(&eta);
        let rf = r as f64;
        for j in 0..r {
            let u = (j as f64 + rng.random::<f64>()) / rf;
            counts[inverse_cdf(&c, u.min(1.0 - f64::EPSILON))] += 1;
        }
    }
    WeightVector::from_counts(&counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleExpectations {
    pub iid: f64,
    pub residual: f64,
    pub stratified: f64,
}

fn quad<K: KernelOracle + ?Sized>(k: &K, support: &[usize], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for &i in support {
        if a[i] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for &j in support {
            if b[j] != 0.0 {
                acc += b[j] * k.entry(i, j);
            }
        }
        s += a[i] * acc;
    }
    s
}

/// Exact `E‖(w′ − w)‖²_K` for the three resamplers.
pub fn resample_mmd_expectations<K: KernelOracle + ?Sized>(
    k: &K,
    w: &WeightVector,
    m: usize,
) -> Result<ResampleExpectations> {
    check(w.values(), m)?;
    if w.len() != k.len() {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{}", k.len()),
            got: format!("{}", w.len()),
        });
    }
    let wv = w.values();
    let support = w.support();
    let diag_mean = |p: &[f64]| support.iter().map(|&i| p[i] * k.entry(i, i)).sum::<f64>();
    let mf = m as f64;
    let iid = (diag_mean(wv) - quad(k, &support, wv, wv)) / mf;

    let (_, r, eta) = split_residual(wv, m);
    if r == 0 {
        return Ok(ResampleExpectations {
            iid: iid.max(0.0),
            residual: 0.0,
            stratified: 0.0,
        });
    }
    let rf = r as f64;
    // With no deterministic part the residual draw is the iid draw, and a
    // single stratum is a single iid draw; reuse the values so ties are exact.
    let residual = if r == m {
        iid
    } else {
        rf * (diag_mean(&eta) - quad(k, &support, &eta, &eta)) / (mf * mf)
    };
    if r == 1 {
        return Ok(ResampleExpectations {
            iid: iid.max(0.0),
            residual: residual.max(0.0),
            stratified: residual.max(0.0),
        });
    }

    // Stratum j draws index i with probability r·|[C_{i−1}, C_i) ∩ [j/r, (j+1)/r)|.
    let c = cdf(&eta);
    let mut between = 0.0;
    let mut law = vec![0.0; eta.len()];
    for j in 0..r {
        let (lo, hi) = (j as f64 / rf, (j + 1) as f64 / rf);
        law.iter_mut().for_each(|v| *v = 0.0);
        let mut prev: f64 = 0.0;
        for (i, &ci) in c.iter().enumerate() {
            let overlap = (ci.min(hi) - prev.max(lo)).max(0.0);
            law[i] = overlap * rf;
            prev = ci;
        }
        between += quad(k, &support, &law, &law);
    }
    let stratified = (rf * diag_mean(&eta) - between) / (mf * mf);
    Ok(ResampleExpectations {
        iid: iid.max(0.0),
        residual: residual.max(0.0),
        stratified: stratified.max(0.0),
    })
}
