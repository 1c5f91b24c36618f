//! Kernel thinning: randomized self-balancing halving, recursive splitting,
//! and the near-linear Compress++ wrapper.

use rand::Rng;

use crate::error::{Error, Result};
use crate::greedy::kt_swap;
use crate::kernel::KernelOracle;
use crate::rng::{child_seed, stream};
use crate::weights::{WeightKind, WeightVector};

#[derive(Debug, Clone, PartialEq)]
pub struct HalveOutcome {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// `+1` when the first point of the pair went left.
    pub signs: Vec<i8>,
    pub sigma_sq_final: f64,
}

/// Splits consecutive pairs of `indices` between two halves, steering each
/// pair so that the running difference of the halves' kernel embeddings
/// stays small.
pub fn halve<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    indices: &[usize],
    delta_pair: f64,
    rng: &mut R,
) -> Result<HalveOutcome> {
    if !indices.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "halving needs an even number of points, got {}",
            indices.len()
        )));
    }
    if !(delta_pair > 0.0 && delta_pair < 1.0) {
        return Err(Error::InvalidArgument(format!("pair failure probability {delta_pair} outside (0,1)")));
    }
    let n = oracle.len();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let pairs = indices.len() / 2;
    let log_term = 2.0 * (2.0 / delta_pair).ln();
    let mut left = Vec::with_capacity(pairs);
    let mut right = Vec::with_capacity(pairs);
    let mut signs = Vec::with_capacity(pairs);
    let mut sigma_sq = 0.0f64;
    for p in 0..pairs {
        let (y, y2) = (indices[2 * p], indices[2 * p + 1]);
        let b_sq = (oracle.entry(y, y) + oracle.entry(y2, y2) - 2.0 * oracle.entry(y, y2)).max(0.0);
        let mut alpha = 0.0;
        for (&l, &r) in left.iter().zip(&right) {
            alpha += oracle.entry(l, y) - oracle.entry(r, y) - oracle.entry(l, y2) + oracle.entry(r, y2);
        }
        let a = if sigma_sq == 0.0 {
            b_sq
        } else {
            (b_sq * sigma_sq * log_term).sqrt().max(b_sq)
        };
        let prob = if a > 0.0 { (0.5 * (1.0 - alpha / a)).clamp(0.0, 1.0) } else { 0.5 };
        let u: f64 = rng.random();
        if u < prob {
            left.push(y);
            right.push(y2);
            signs.push(1);
        } else {
            left.push(y2);
            right.push(y);
            signs.push(-1);
        }
        if sigma_sq == 0.0 {
            sigma_sq = b_sq;
        } else if a > 0.0 {
            sigma_sq += b_sq * (1.0 + (b_sq - 2.0 * a) * sigma_sq / (a * a)).max(0.0);
        }
    }
    Ok(HalveOutcome {
        left,
        right,
        signs,
        sigma_sq_final: sigma_sq,
    })
}

/// Recursive halving into `2^t` coresets of `|indices| / 2^t` points each.
///
/// Every node of the tree draws from its own stream derived from `seed`
/// and its position, so the result depends only on `seed`.
pub fn kt_split<K: KernelOracle + ?Sized>(
    oracle: &K,
    indices: &[usize],
    t: u32,
    delta_pair: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let parts = 1usize
        .checked_shl(t)
        .ok_or_else(|| Error::InvalidArgument(format!("split depth {t} too large")))?;
    if !indices.len().is_multiple_of(parts) {
        return Err(Error::InvalidArgument(format!(
            "{} points cannot be split into {parts} equal coresets",
            indices.len()
        )));
    }
    if t == 0 {
        return Ok(vec![indices.to_vec()]);
    }
    let mut rng = stream(seed);
    let out = halve(oracle, indices, delta_pair, &mut rng)?;
    let mut leaves = kt_split(oracle, &out.left, t - 1, delta_pair, child_seed(seed, 0))?;
    leaves.extend(kt_split(oracle, &out.right, t - 1, delta_pair, child_seed(seed, 1))?);
    Ok(leaves)
}

fn multiset_size(w: &WeightVector) -> Result<usize> {
    match w.kind() {
        WeightKind::EqualMultiset(m) => Ok(m),
        _ => Err(Error::InvalidWeights("expected equal-multiset weights".into())),
    }
}

/// Kernel thinning of the multiset encoded by `w` down to `m` points.
pub fn kernel_thinning<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    w: &WeightVector,
    m: usize,
    delta: f64,
    rng: &mut R,
) -> Result<WeightVector> {
    let n_prime = multiset_size(w)?;
    if w.len() != oracle.len() {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: format!("{}", oracle.len()),
            got: format!("{}", w.len()),
        });
    }
    if m == 0 || n_prime % m != 0 || !(n_prime / m).is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "multiset size {n_prime} is not a power-of-two multiple of m = {m}"
        )));
    }
    let t = (n_prime / m).trailing_zeros();
    let seq = w.expand_indices().unwrap_or_default();
    let leaves = kt_split(oracle, &seq, t, delta / n_prime as f64, rng.random())?;
    let best = kt_swap(oracle, &leaves)?;
    WeightVector::from_indices(oracle.len(), &best)
}

struct CompressCtx {
    g: u32,
    delta: f64,
    n_top: usize,
    beta: f64,
}

impl CompressCtx {
    fn new(g: u32, delta: f64, n_top: usize) -> Self {
        let beta = (n_top as f64 / 4f64.powi(g as i32)).log2();
        Self { g, delta, n_top, beta }
    }

    /// Per-pair failure probability for a halving over `h` points.
    fn halve_delta(&self, h: usize) -> f64 {
        let two_g = 2f64.powi(self.g as i32);
        let h = h as f64;
        let gamma = h * h / (4.0 * self.n_top as f64 * two_g * (self.g as f64 + (self.beta + 1.0) * two_g));
        (gamma * self.delta / h).min(0.5)
    }

    fn thin_delta(&self, h: usize) -> f64 {
        let two_g = 2f64.powi(self.g as i32);
        let gamma = self.g as f64 / (self.g as f64 + (self.beta + 1.0) * two_g);
        (gamma * self.delta / h as f64).min(0.5)
    }
}

fn log4_exact(n: usize) -> Option<u32> {
    (n.is_power_of_two() && n.trailing_zeros().is_multiple_of(2)).then(|| n.trailing_zeros() / 2)
}

fn compress_rec<K: KernelOracle + ?Sized>(
    oracle: &K,
    indices: &[usize],
    ctx: &CompressCtx,
    seed: u64,
) -> Result<Vec<usize>> {
    let len = indices.len();
    if len <= 1usize << (2 * ctx.g) {
        return Ok(indices.to_vec());
    }
    let q = len / 4;
    let mut merged = Vec::with_capacity(len / 2);
    for (c, quarter) in indices.chunks(q).enumerate() {
        merged.extend(compress_rec(oracle, quarter, ctx, child_seed(seed, c as u64))?);
    }
    let mut rng = stream(seed);
    let out = halve(oracle, &merged, ctx.halve_delta(merged.len()), &mut rng)?;
    Ok(if rng.random::<bool>() { out.left } else { out.right })
}

/// Compress recursion with symmetrized halving: `4^a` points in, `2^g·2^a`
/// points out.
///
/// `n_top` is the size of the outermost input, which sets the failure
/// probability schedule across levels.
pub fn compress<K: KernelOracle + ?Sized>(
    oracle: &K,
    indices: &[usize],
    g: u32,
    delta: f64,
    n_top: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let a = log4_exact(indices.len())
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a power of 4", indices.len())))?;
    if g > a {
        return Err(Error::InvalidArgument(format!("oversampling {g} exceeds log4 of the input size")));
    }
    compress_rec(oracle, indices, &CompressCtx::new(g, delta, n_top.max(indices.len())), seed)
}

/// Near-linear kernel thinning of the multiset `w` (size `n′ = 4^a`) to
/// `2^a = √n′` points.
///
/// The oversampling parameter is capped at `a`; at the cap Compress is the
/// identity and plain kernel thinning is used instead.
pub fn kt_compresspp<K: KernelOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &K,
    w: &WeightVector,
    g: u32,
    delta: f64,
    rng: &mut R,
) -> Result<WeightVector> {
    let n_prime = multiset_size(w)?;
    let a = log4_exact(n_prime)
        .ok_or_else(|| Error::InvalidArgument(format!("multiset size {n_prime} is not a power of 4")))?;
    let m = 1usize << a;
    let g = g.min(a);
    if g == a {
        return kernel_thinning(oracle, w, m, delta, rng);
    }
    let seq = w.expand_indices().unwrap_or_default();
    let seed: u64 = rng.random();
    let ctx = CompressCtx::new(g, delta, n_prime);
    let compressed = compress_rec(oracle, &seq, &ctx, child_seed(seed, 0))?;
    let leaves = kt_split(oracle, &compressed, g, ctx.thin_delta(compressed.len()), child_seed(seed, 1))?;
    let best = kt_swap(oracle, &leaves)?;
    WeightVector::from_indices(oracle.len(), &best)
}
