//! Debiased distribution compression.
//!
//! Given a sample `x_1..x_n` that may be biased (burn-in, tempering,
//! approximate MCMC) together with the scores `∇log p(x_i)` of the target
//! distribution `P`, the routines in this crate build small weighted
//! coresets whose empirical measure is close to `P` in the maximum mean
//! discrepancy of a Stein kernel. Because a Stein kernel has mean zero under
//! `P`, the squared MMD of a weight vector `w` is simply `wᵀKw`.
//!
//! Three families of output weights are supported:
//!
//! | family | pipeline | weights |
//! |--------|----------|---------|
//! | equal multiset | [`pipelines::skt`], [`pipelines::lskt`] | multiples of `1/m` |
//! | simplex | [`pipelines::stein_recombination`] | nonnegative, sum to one |
//! | constant preserving | [`pipelines::stein_cholesky`] | real, sum to one |
//!
//! ```
//! use dbc_core::kernel::{BaseKernelSpec, KernelFamily, PointSet, Preconditioner, ScoreSet, SteinKernel};
//! use dbc_core::{greedy, metrics};
//!
//! let xs = vec![-1.0, -0.2, 0.1, 0.9, 2.5];
//! let points = PointSet::new(xs.clone(), 5, 1).unwrap();
//! let scores = ScoreSet::new(xs.iter().map(|x| -x).collect(), 5, 1).unwrap();
//! let base = BaseKernelSpec::new(KernelFamily::Imq, 1.0).unwrap();
//! let kernel = SteinKernel::new(points, scores, base, Preconditioner::identity(1)).unwrap();
//!
//! let (_, w) = greedy::stein_thinning(&kernel, 3).unwrap();
//! assert!(metrics::mmd_sq(&kernel, w.values()).unwrap() >= 0.0);
//! ```

pub mod cholesky_thinning;
pub mod error;
pub mod greedy;
pub mod io;
pub mod kernel;
pub mod kt;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod pipelines;
pub mod recombination;
pub mod resample;
pub mod rng;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
pub use kernel::{
    BaseKernelSpec, DenseKernel, KernelFamily, KernelOracle, Offset, PointSet, Preconditioner,
    ScoreSet, SteinKernel,
};
pub use linalg::DenseMatrix;
pub use weights::{WeightKind, WeightVector};
