//! Greedy thinning: Stein thinning, swap refinement of equal-weight
//! coresets, and swap-with-line-search refinement of weighted coresets.

use crate::error::{Error, Result};
use crate::kernel::KernelOracle;
use crate::weights::{WeightKind, WeightVector};

/// Lowest index attaining the minimum. NaN entries are never selected.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x < best_val {
            best_val = x;
            best = i;
        }
    }
    best
}

/// Greedy Stein thinning to `m` points, repeats allowed.
///
/// Returns the selection order together with the matching equal-multiset
/// weights. Each round adds the point that most decreases `wᵀKw`; only `m`
/// kernel rows are evaluated.
pub fn stein_thinning<K: KernelOracle + ?Sized>(oracle: &K, m: usize) -> Result<(Vec<usize>, WeightVector)> {
    let n = oracle.len();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("stein thinning needs m ≥ 1 and a nonempty input".into()));
    }
    let diag = oracle.diag();
    // `sums` is Σ_j k(x_{I_j}, ·), i.e. t·g/2 with g = 2Kw.
    let mut sums = vec![0.0; n];
    let mut row = vec![0.0; n];
    let mut scores = vec![0.0; n];
    let mut order = Vec::with_capacity(m);
    let mut j = argmin(&diag);
    for t in 0..m {
        if t > 0 {
            for ((s, &g), &d) in scores.iter_mut().zip(&sums).zip(&diag) {
                *s = 2.0 * g + d;
            }
            j = argmin(&scores);
        }
        order.push(j);
        if t + 1 < m {
            oracle.row_into(j, &mut row);
            for (g, &r) in sums.iter_mut().zip(&row) {
                *g += r;
            }
        }
    }
    let w = WeightVector::from_indices(n, &order)?;
    Ok((order, w))
}

/// `Σ_a Σ_b k(I_a, I_b) / m²`.
pub fn multiset_mmd_sq<K: KernelOracle + ?Sized>(oracle: &K, indices: &[usize]) -> f64 {
    let m = indices.len();
    let mut total = 0.0;
    for (a, &i) in indices.iter().enumerate() {
        total += oracle.entry(i, i);
        let mut acc = 0.0;
        for &j in &indices[a + 1..] {
            acc += oracle.entry(i, j);
        }
        total += 2.0 * acc;
    }
    total / (m * m) as f64
}

fn swap_sweep<K: KernelOracle + ?Sized>(oracle: &K, diag: &[f64], sel: &mut [usize]) {
    let n = oracle.len();
    let mut rows: Vec<Vec<f64>> = sel.iter().map(|&i| oracle.row(i)).collect();
    let mut g = vec![0.0; n];
    for r in &rows {
        for (a, &b) in g.iter_mut().zip(r) {
            *a += b;
        }
    }
    let mut delta = vec![0.0; n];
    for j in 0..sel.len() {
        for i in 0..n {
            g[i] -= rows[j][i];
            delta[i] = 2.0 * g[i] + diag[i];
        }
        let k = argmin(&delta);
        if k != sel[j] {
            sel[j] = k;
            oracle.row_into(k, &mut rows[j]);
        }
        for (a, &b) in g.iter_mut().zip(&rows[j]) {
            *a += b;
        }
    }
}

/// Refines a family of equal-size candidate coresets.
///
/// The best candidate and a Stein thinning coreset of the same size each
/// get one swap sweep over all `n` points, and the better of the two is
/// returned.
pub fn kt_swap<K: KernelOracle + ?Sized>(oracle: &K, candidates: &[Vec<usize>]) -> Result<Vec<usize>> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::InvalidArgument("kt_swap needs at least one candidate".into()))?;
    let m = first.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty candidate coreset".into()));
    }
    let n = oracle.len();
    for c in candidates {
        if c.len() != m {
            return Err(Error::ShapeMismatch {
                what: "candidate coreset",
                expected: format!("{m}"),
                got: format!("{}", c.len()),
            });
        }
        if let Some(&bad) = c.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
    }
    let scores: Vec<f64> = candidates.iter().map(|c| multiset_mmd_sq(oracle, c)).collect();
    let best = candidates[argmin(&scores)].clone();
    let (st, _) = stein_thinning(oracle, m)?;
    let diag = oracle.diag();
    let mut out: Option<(f64, Vec<usize>)> = None;
    for mut sel in [best, st] {
        swap_sweep(oracle, &diag, &mut sel);
        let v = multiset_mmd_sq(oracle, &sel);
        if out.as_ref().is_none_or(|(b, _)| v < *b) {
            out = Some((v, sel));
        }
    }
    Ok(out.map(|(_, s)| s).unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapMode {
    /// Keep weights in the simplex (line search clipped to `[0, 1]`).
    Simplex,
    /// Only keep the weights summing to one.
    ConstantPreserving,
}

struct LineSearchState<'a, K: ?Sized> {
    oracle: &'a K,
    row: Vec<f64>,
    w: Vec<f64>,
    /// `Kw`
    g: Vec<f64>,
    /// `wᵀKw`
    d: f64,
}

impl<K: KernelOracle + ?Sized> LineSearchState<'_, K> {
    fn add(&mut self, i: usize, t: f64, kii: f64) {
        if t == 0.0 {
            return;
        }
        self.d += 2.0 * t * self.g[i] + t * t * kii;
        self.oracle.row_into(i, &mut self.row);
        for (g, &r) in self.g.iter_mut().zip(&self.row) {
            *g += t * r;
        }
        self.w[i] += t;
    }

    fn scale(&mut self, a: f64) {
        self.g.iter_mut().for_each(|g| *g *= a);
        self.w.iter_mut().for_each(|w| *w *= a);
        self.d *= a * a;
    }
}

/// One pass of swap-with-line-search over the support of `w`.
///
/// Each support point in turn is removed and replaced by the point and step
/// size that minimize `wᵀKw` along the segment towards it. The objective
/// never increases and the support never grows.
pub fn kt_swap_ls<K: KernelOracle + ?Sized>(oracle: &K, w: &WeightVector, mode: SwapMode) -> Result<WeightVector> {
    let n = oracle.len();
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{n}"),
            got: format!("{}", w.len()),
        });
    }
    if mode == SwapMode::Simplex && w.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidWeights("simplex swap needs nonnegative weights".into()));
    }
    let diag = oracle.diag();
    let support = w.support();
    let mut st = LineSearchState {
        oracle,
        row: vec![0.0; n],
        w: vec![0.0; n],
        g: vec![0.0; n],
        d: 0.0,
    };
    for &i in &support {
        st.add(i, w.values()[i], diag[i]);
    }
    let mut alpha = vec![0.0; n];
    let mut dprime = vec![0.0; n];
    for &i in &support {
        let wi = st.w[i];
        if wi == 0.0 || (1.0 - wi).abs() < 1e-12 {
            continue;
        }
        st.add(i, -wi, diag[i]);
        st.w[i] = 0.0;
        st.scale(1.0 / (1.0 - wi));
        let d = st.d;
        for k in 0..n {
            let den = d - 2.0 * st.g[k] + diag[k];
            let mut a = if den == 0.0 { 0.0 } else { (d - st.g[k]) / den };
            if mode == SwapMode::Simplex {
                a = a.clamp(0.0, 1.0);
            }
            alpha[k] = a;
            dprime[k] = (1.0 - a) * (1.0 - a) * d + 2.0 * a * (1.0 - a) * st.g[k] + a * a * diag[k];
        }
        let k = argmin(&dprime);
        st.scale(1.0 - alpha[k]);
        st.add(k, alpha[k], diag[k]);
    }
    let out = st.w;
    match (mode, w.kind()) {
        (SwapMode::Simplex, _) => WeightVector::simplex_normalized(out),
        (SwapMode::ConstantPreserving, WeightKind::Simplex) if out.iter().all(|&v| v >= 0.0) => {
            WeightVector::simplex_normalized(out)
        }
        _ => WeightVector::constant_preserving_normalized(out),
    }
}
