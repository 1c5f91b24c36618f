//! Weight vectors over the input points.

use crate::error::{Error, Result};

/// Tolerance on `|Σw − 1|` for simplex and constant-preserving weights.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Entries in `{0, 1/m, 2/m, …}` summing to one.
    EqualMultiset(usize),
    /// Nonnegative entries summing to one.
    Simplex,
    /// Real entries summing to one.
    ConstantPreserving,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    kind: WeightKind,
}

impl WeightVector {
    /// Multiset weights `counts_i / m` with `m = Σ counts`.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let m: usize = counts.iter().sum();
        if m == 0 {
            return Err(Error::InvalidWeights("empty multiset".into()));
        }
        let w = counts.iter().map(|&c| c as f64 / m as f64).collect();
        Ok(Self {
            w,
            kind: WeightKind::EqualMultiset(m),
        })
    }

    /// Multiset weights from an index sequence (repeats allowed).
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut counts = vec![0usize; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            counts[i] += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
            kind: WeightKind::Simplex,
        }
    }

    pub fn simplex(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights("simplex weights must be finite and nonnegative".into()));
        }
        check_sum(&w)?;
        Ok(Self {
            w,
            kind: WeightKind::Simplex,
        })
    }

    /// Clamp negatives to zero and rescale to unit mass.
    pub fn simplex_normalized(mut w: Vec<f64>) -> Result<Self> {
        for v in w.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite("weights"));
            }
            *v = v.max(0.0);
        }
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidWeights("zero total mass".into()));
        }
        w.iter_mut().for_each(|v| *v /= s);
        Self::simplex(w)
    }

    pub fn constant_preserving(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        check_sum(&w)?;
        Ok(Self {
            w,
            kind: WeightKind::ConstantPreserving,
        })
    }

    pub fn constant_preserving_normalized(mut w: Vec<f64>) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !s.is_finite() || s.abs() < 1e-300 {
            return Err(Error::InvalidWeights("weights do not have a usable total".into()));
        }
        w.iter_mut().for_each(|v| *v /= s);
        Self::constant_preserving(w)
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Indices with nonzero weight, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.w.iter().filter(|&&v| v != 0.0).count()
    }

    /// Multiplicities for multiset weights.
    pub fn counts(&self) -> Option<Vec<usize>> {
        match self.kind {
            WeightKind::EqualMultiset(m) => {
                Some(self.w.iter().map(|&v| (v * m as f64).round() as usize).collect())
            }
            _ => None,
        }
    }

    /// Index sequence in which `i` appears `count_i` times, ascending.
    pub fn expand_indices(&self) -> Option<Vec<usize>> {
        let counts = self.counts()?;
        Some(
            counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
                .collect(),
        )
    }

    /// Checks the invariant attached to this vector's kind.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            WeightKind::EqualMultiset(m) => {
                let counts = self.counts().unwrap_or_default();
                for (&v, &c) in self.w.iter().zip(&counts) {
                    if (v * m as f64 - c as f64).abs() > 1e-9 {
                        return Err(Error::InvalidWeights(format!("{v} is not a multiple of 1/{m}")));
                    }
                }
                if counts.iter().sum::<usize>() != m {
                    return Err(Error::InvalidWeights("multiplicities do not sum to m".into()));
                }
                Ok(())
            }
            WeightKind::Simplex => {
                if self.w.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidWeights("negative simplex weight".into()));
                }
                check_sum(&self.w)
            }
            WeightKind::ConstantPreserving => check_sum(&self.w),
        }
    }
}

fn check_sum(w: &[f64]) -> Result<()> {
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}
