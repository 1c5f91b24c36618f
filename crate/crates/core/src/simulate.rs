//! Synthetic biased samples for a standard Gaussian target `N(0, I_d)`.
//!
//! Scores are always those of the target, `∇log p(x) = −x`, whatever
//! distribution the points were drawn from.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{PointSet, ScoreSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Exact draws from the target.
    IidTarget,
    /// Draws from `N(shift·1, I)`.
    IidOfftarget { shift: f64 },
    /// Metropolis-adjusted Langevin chain started at `start·1`.
    MalaBurnin { start: f64, step: f64 },
    /// Draws from `N(0, τI)`.
    Tempered { tau: f64 },
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::IidTarget => write!(f, "iid-target"),
            Scenario::IidOfftarget { shift } => write!(f, "iid-offtarget({shift})"),
            Scenario::MalaBurnin { start, step } => write!(f, "mala-burnin({start},{step})"),
            Scenario::Tempered { tau } => write!(f, "tempered({tau})"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// `name` or `name(a,b,…)`; omitted arguments take defaults
    /// (shift 2, start 10, step 0.5, τ 2).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("unbalanced parentheses in scenario {s:?}")))?;
                let args = inner
                    .split(',')
                    .filter(|a| !a.trim().is_empty())
                    .map(|a| {
                        a.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad scenario argument {:?}", a.trim())))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                (name.trim(), args)
            }
            None => (s, Vec::new()),
        };
        let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
        let max_args = match name {
            "iid-target" => 0,
            "iid-offtarget" | "tempered" => 1,
            "mala-burnin" => 2,
            _ => return Err(Error::Parse(format!("unknown scenario {name:?}"))),
        };
        if args.len() > max_args {
            return Err(Error::Parse(format!("scenario {name} takes at most {max_args} arguments")));
        }
        let out = match name {
            "iid-target" => Scenario::IidTarget,
            "iid-offtarget" => Scenario::IidOfftarget { shift: arg(0, 2.0) },
            "mala-burnin" => Scenario::MalaBurnin {
                start: arg(0, 10.0),
                step: arg(1, 0.5),
            },
            _ => Scenario::Tempered { tau: arg(0, 2.0) },
        };
        if let Scenario::Tempered { tau } = out {
            if !(tau > 0.0) {
                return Err(Error::InvalidArgument("tempering τ must be positive".into()));
            }
        }
        if let Scenario::MalaBurnin { step, .. } = out {
            if !(step > 0.0) {
                return Err(Error::InvalidArgument("MALA step must be positive".into()));
            }
        }
        Ok(out)
    }
}

fn log_target(x: &[f64]) -> f64 {
    -0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

/// `log q(to | from)` for the Langevin proposal, up to a constant.
fn log_proposal(to: &[f64], from: &[f64], step: f64) -> f64 {
    let h2 = step * step;
    -to.iter()
        .zip(from)
        .map(|(t, f)| {
            let mean = f - 0.5 * h2 * f;
            (t - mean) * (t - mean)
        })
        .sum::<f64>()
        / (2.0 * h2)
}

/// `n` states of a MALA chain targeting `N(0, I_d)`; the proposal is
/// `x + (h²/2)∇log p(x) + hξ` with a Metropolis correction.
pub fn mala_chain<R: Rng + ?Sized>(n: usize, d: usize, start: f64, step: f64, rng: &mut R) -> Vec<f64> {
    let mut x = vec![start; d];
    let mut out = Vec::with_capacity(n * d);
    let h2 = step * step;
    let mut prop = vec![0.0; d];
    for _ in 0..n {
        for (p, &xi) in prop.iter_mut().zip(&x) {
            let xi_noise: f64 = rng.sample(StandardNormal);
            *p = xi - 0.5 * h2 * xi + step * xi_noise;
        }
        let log_ratio = log_target(&prop) + log_proposal(&x, &prop, step) - log_target(&x) - log_proposal(&prop, &x, step);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            x.copy_from_slice(&prop);
        }
        out.extend_from_slice(&x);
    }
    out
}

pub fn simulate<R: Rng + ?Sized>(scenario: Scenario, n: usize, d: usize, rng: &mut R) -> Result<(PointSet, ScoreSet)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("simulation needs n ≥ 1 and d ≥ 1".into()));
    }
    let mut gauss = |scale: f64, shift: f64| -> Vec<f64> {
        (0..n * d)
            .map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let x = match scenario {
        Scenario::IidTarget => gauss(1.0, 0.0),
        Scenario::IidOfftarget { shift } => gauss(1.0, shift),
        Scenario::Tempered { tau } => gauss(tau.sqrt(), 0.0),
        Scenario::MalaBurnin { start, step } => mala_chain(n, d, start, step, rng),
    };
    let s = x.iter().map(|v| -v).collect();
    Ok((PointSet::new(x, n, d)?, ScoreSet::new(s, n, d)?))
}
