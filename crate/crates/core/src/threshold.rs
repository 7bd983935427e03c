//! The admissible radius `R̄`: the largest `R` with `(*)(r, R) ≤ 0` for all
//! `r ∈ (0, R]`, together with the gaussian reference checks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::radial::{ConformalChart, RadialGeometry};
use crate::util::bisect;
use crate::warp::{from_conformal_factor, ConformalFactor, Preset};

/// `(*)` values up to this size count as nonpositive.
pub const STAR_TOL: f64 = 1e-12;

pub const DEFAULT_GRID: usize = 2000;

/// Maximum of `(*)(·, R)` over `(0, R]` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarMax {
    pub value: f64,
    pub at: f64,
}

fn star_with(geom: &RadialGeometry, r: f64, i_big_r: f64) -> Result<f64> {
    let st = geom.state(r)?;
    Ok(st.j + i_big_r * (st.dh - 1.0).powi(2))
}

/// Grid maximum of `(*)(r, R)` over `r_k = kR/N`, refined by golden-section
/// search on the two cells around the grid maximizer.
pub fn star_max(geom: &RadialGeometry, big_r: f64, grid_n: usize) -> Result<StarMax> {
    geom.profile().check_domain("R", big_r)?;
    if !(big_r > 0.0) || grid_n < 2 {
        return Err(Error::InvalidParameter(format!("star_max needs R > 0 and grid >= 2 (R = {big_r}, N = {grid_n})")));
    }
    let ir = geom.integral_i(big_r)?;
    let values = (1..=grid_n)
        .into_par_iter()
        .map(|k| star_with(geom, big_r * k as f64 / grid_n as f64, ir))
        .collect::<Result<Vec<f64>>>()?;
    let (kmax, &vmax) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
    let k = kmax + 1;
    let mut best = StarMax { value: vmax, at: big_r * k as f64 / grid_n as f64 };

    let dr = big_r / grid_n as f64;
    let (mut a, mut b) = ((k as f64 - 1.0) * dr, ((k as f64 + 1.0) * dr).min(big_r));
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |r: f64| star_with(geom, r, ir);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    for (r, v) in [(c, fc), (d, fd)] {
        if v > best.value {
            best = StarMax { value: v, at: r };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// `R̄` in geodesic radius; infinite when `(*)` never becomes positive.
    pub r_bar: f64,
    /// `s(R̄)` in the conformal chart.
    pub r_bar_chart: f64,
    /// Where `(*)(·, R̄)` attains its maximum.
    pub binding_r: f64,
    pub grid_n: usize,
    /// `star_max(R̄)`.
    pub certificate_below: f64,
    /// `star_max(R̄ (1 + 1e-3))`, absent when that leaves the domain.
    pub certificate_above: Option<f64>,
    pub hits_domain_bound: bool,
    /// Every evaluated `(*)` was exactly zero.
    pub identically_zero: bool,
}

/// Largest `R` passing `star_max(R) ≤ STAR_TOL`, by bracket growth from
/// `min(r̄/2, 1)` and 60 bisection steps (or until the bracket is below `tol`).
pub fn find_r_bar(geom: &RadialGeometry, tol: f64, grid_n: usize) -> Result<ThresholdReport> {
    let r_max = geom.r_max();
    let mut all_zero = true;
    let mut passes = |r: f64| -> Result<bool> {
        let m = star_max(geom, r, grid_n)?;
        if m.value != 0.0 {
            all_zero = false;
        }
        Ok(m.value <= STAR_TOL)
    };

    let mut lo = if r_max.is_finite() { (0.5 * r_max).min(1.0) } else { 1.0 };
    while !passes(lo)? {
        lo *= 0.5;
        if lo < 1e-6 {
            return Err(Error::NoAdmissibleRadius(format!("(*) is positive for every R down to {lo:e}")));
        }
    }
    let mut hi = f64::NAN;
    for _ in 0..200 {
        let next = if r_max.is_finite() && 2.0 * lo >= r_max { 0.5 * (lo + r_max) } else { 2.0 * lo };
        if next == lo || (r_max.is_infinite() && next > 1e12) {
            break;
        }
        if passes(next)? {
            lo = next;
        } else {
            hi = next;
            break;
        }
    }

    let chart = ConformalChart::for_profile(geom.profile())?;
    if hi.is_nan() {
        // passes all the way to the domain bound
        let binding = star_max(geom, lo, grid_n)?;
        return Ok(ThresholdReport {
            r_bar: r_max,
            r_bar_chart: chart.s_max(),
            binding_r: binding.at,
            grid_n,
            certificate_below: binding.value,
            certificate_above: None,
            hits_domain_bound: true,
            identically_zero: all_zero,
        });
    }
    for _ in 0..60 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let below = star_max(geom, lo, grid_n)?;
    let above_r = lo * (1.0 + 1e-3);
    let certificate_above = if above_r < r_max { Some(star_max(geom, above_r, grid_n)?.value) } else { None };
    Ok(ThresholdReport {
        r_bar: lo,
        r_bar_chart: chart.s_of_r(lo)?,
        binding_r: below.at,
        grid_n,
        certificate_below: below.value,
        certificate_above,
        hits_domain_bound: false,
        identically_zero: all_zero,
    })
}

/// `f(r) = 8 + r⁴ - e^{r²/2}(8 - 4r² + r⁴)`.
pub fn gaussian_root_function(r: f64) -> f64 {
    let r2 = r * r;
    8.0 + r2 * r2 - (0.5 * r2).exp() * (8.0 - 4.0 * r2 + r2 * r2)
}

/// The positive root of [`gaussian_root_function`] on `[1, 2]`.
pub fn gaussian_root_reference() -> f64 {
    bisect(gaussian_root_function, 1.0, 2.0, 1e-9).expect("sign change on [1, 2]")
}

/// The gaussian threshold under both readings of the conformal factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConventions {
    /// Solver on `rho = e^{-s²/8}` (so that `g = rho² δ = e^{-|x|²/4} δ`).
    pub solver: ThresholdReport,
    /// Root of the closed-form reduction in its own variable.
    pub reference_root: f64,
    /// The reference root rescaled by `√2` to chart radius under `rho = e^{-s²/8}`.
    pub reference_root_scaled: f64,
    /// Solver on `rho = e^{-s²/4}`, i.e. reading `e^{-|x|²/4}` as the factor itself.
    pub alternative: ThresholdReport,
}

pub fn gaussian_conventions(tol: f64, grid_n: usize) -> Result<GaussianConventions> {
    let geom = RadialGeometry::new(crate::warp::make_preset(Preset::GaussianShrinker));
    let solver = find_r_bar(&geom, tol, grid_n)?;
    let alt = from_conformal_factor(ConformalFactor::new(
        |s: f64| (-s * s / 4.0).exp(),
        |s: f64| -0.5 * s * (-s * s / 4.0).exp(),
    ))?;
    let alternative = find_r_bar(&RadialGeometry::new(alt), tol, grid_n)?;
    let root = gaussian_root_reference();
    Ok(GaussianConventions {
        solver,
        reference_root: root,
        reference_root_scaled: std::f64::consts::SQRT_2 * root,
        alternative,
    })
}

/// Scalar curvature of `rho(s)² δ` on `ℝⁿ` at radius `s`:
/// with `f = ln rho`, `Scal = -e^{-2f}(2(n-1)Δf + (n-2)(n-1)|∇f|²)`.
pub fn conformal_scalar_curvature(chart: &ConformalChart, s: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 2 (got {dim})")));
    }
    let rho = chart.rho(s)?;
    let rp = chart.rho_prime(s)?;
    let rpp = chart.rho_second(s)?;
    let fp = rp / rho;
    let fpp = rpp / rho - fp * fp;
    let n = dim as f64;
    // f'/s tends to f''(0) at the origin
    let fp_over_s = if s > 0.0 { fp / s } else { fpp };
    let lap = fpp + (n - 1.0) * fp_over_s;
    Ok(-(2.0 * (n - 1.0) * lap + (n - 2.0) * (n - 1.0) * fp * fp) / (rho * rho))
}

/// A sign change of the scalar curvature on `[lo, hi]`.
pub fn scalar_curvature_root(chart: &ConformalChart, dim: usize, lo: f64, hi: f64) -> Result<f64> {
    bisect(|s| conformal_scalar_curvature(chart, s, dim).unwrap_or(f64::NAN), lo, hi, 1e-12)
}
