//! One-dimensional quadrature.
//!
//! Fixed panels use a 10-point Gauss–Legendre rule; the adaptive integrator
//! bisects panels until the single-panel estimate and the two-half estimate
//! agree to the requested tolerance.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Default tolerances used across the radial computations.
pub const ABS_TOL: f64 = 1e-12;
pub const REL_TOL: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(10).unwrap()))
}

/// 10-point Gauss–Legendre estimate of the integral of `f` over `[a, b]`.
#[inline]
pub fn gauss_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    rule().integrate(a, b, f)
}

/// Adaptive integral of `f` over `[a, b]` with combined absolute/relative
/// tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("non-finite integration bounds [{a}, {b}]")));
    }
    let whole = gauss_panel(&f, a, b);
    let value = refine(&f, a, b, whole, f64::INFINITY, abs_tol, rel_tol, 0)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("integral over [{a}, {b}] is not finite")));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    parent_err: f64,
    abs_tol: f64,
    rel_tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = gauss_panel(f, a, m);
    let right = gauss_panel(f, m, b);
    let halves = left + right;
    let err = (halves - whole).abs();
    let tol = abs_tol.max(rel_tol * halves.abs());
    if err <= tol {
        return Ok(halves);
    }
    // Halving a panel shrinks the error of a smooth integrand by orders of
    // magnitude; when it stops shrinking, the difference is roundoff in f.
    if depth >= 4 && err >= 0.5 * parent_err {
        return Ok(halves);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numeric(format!(
            "adaptive quadrature did not converge on [{a}, {b}]"
        )));
    }
    let l = refine(f, a, m, left, err, 0.5 * abs_tol, rel_tol, depth + 1)?;
    let r = refine(f, m, b, right, err, 0.5 * abs_tol, rel_tol, depth + 1)?;
    Ok(l + r)
}

/// Cumulative integrals of `f` at the nodes `0 = x_0 < x_1 < ... < x_n`,
/// each panel integrated adaptively.
pub fn cumulative<F: Fn(f64) -> f64>(f: &F, nodes: &[f64], abs_tol: f64, rel_tol: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in nodes.windows(2) {
        acc += integrate(f, w[0], w[1], abs_tol, rel_tol)?;
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = gauss_panel(&|x: f64| x.powi(7) - 3.0 * x * x, -1.0, 2.0);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_sharp_features() {
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12).unwrap();
        let exact = 2.0 * (1.0 / 1e-2f64) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn noisy_integrand_terminates() {
        // deterministic pseudo-noise at the 1e-13 level
        let f = |x: f64| 1.0 + 1e-13 * ((x * 1e7).sin() * 43758.5453).fract();
        let v = integrate(f, 0.0, 1.0, 1e-16, 1e-16).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let nodes: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let c = cumulative(&|x: f64| x.cos(), &nodes, 1e-14, 1e-13).unwrap();
        for (x, v) in nodes.iter().zip(&c) {
            assert!((v - x.sin()).abs() < 1e-13);
        }
    }
}
