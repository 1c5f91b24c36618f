use super::{BaseKernelSpec, Preconditioner};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Finite-difference evaluation of the Stein kernel straight from its
/// divergence definition,
///
/// ```text
/// k_p(x,y) = Σ_ab M_ab ∂x_a ∂y_b [p(x) k(x,y) p(y)] / (p(x) p(y)),
/// ```
///
/// using second-order central differences with step `h`. Only the density is
/// used, never the score, so this is independent of the closed form.
pub fn fd_stein_oracle<P>(
    density: P,
    base: &BaseKernelSpec,
    precond: &Preconditioner,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step {h} outside [1e-6, 1e-3]")));
    }
    let d = x.len();
    let px = density(x);
    let py = density(y);
    if !(px > 0.0) || !(py > 0.0) {
        return Err(Error::InvalidArgument("density must be positive".into()));
    }
    let base_k = |a: &[f64], b: &[f64]| {
        let diff: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        let w = precond.whiten(&diff);
        base.eval(dot(&w, &w))
    };
    let mut shifted_x = vec![vec![x.to_vec(); 2]; d];
    let mut ratio_x = vec![[0.0; 2]; d];
    let mut shifted_y = vec![vec![y.to_vec(); 2]; d];
    let mut ratio_y = vec![[0.0; 2]; d];
    for a in 0..d {
        for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
            shifted_x[a][s][a] += sign * h;
            shifted_y[a][s][a] += sign * h;
            let rx = density(&shifted_x[a][s]);
            let ry = density(&shifted_y[a][s]);
            if !(rx > 0.0) || !(ry > 0.0) {
                return Err(Error::InvalidArgument("density must be positive".into()));
            }
            ratio_x[a][s] = rx / px;
            ratio_y[a][s] = ry / py;
        }
    }
    let m = precond.matrix();
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            let mab = m[(a, b)];
            if mab == 0.0 {
                continue;
            }
            // Mixed partial ∂x_a ∂y_b of p(x)k(x,y)p(y)/(p(x)p(y)).
            let mut acc = 0.0;
            for (sx, cx) in [(0usize, 1.0), (1, -1.0)] {
                for (sy, cy) in [(0usize, 1.0), (1, -1.0)] {
                    let xs = &shifted_x[a][sx];
                    let ys = &shifted_y[b][sy];
                    acc += cx * cy * ratio_x[a][sx] * ratio_y[b][sy] * base_k(xs, ys);
                }
            }
            total += mab * acc / (4.0 * h * h);
        }
    }
    Ok(total)
}
