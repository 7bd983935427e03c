//! Rotationally symmetric ambient metrics `g = dr² + h(r)² g_S`.
//!
//! A [`WarpProfile`] is defined either in closed form (euclidean, round
//! sphere), from a conformal factor `rho` of the chart `g = rho(s)² δ`, or
//! from a tabulated warping function. All evaluators are pure and the
//! profile is immutable once built.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::quad;

/// Below this radius ratios like `h(r)/r` and `phi(r)` use their Taylor
/// expansion at the origin.
pub const SERIES_SWITCH: f64 = 1e-3;

/// Tolerance on `rho(0) = 1` for conformal factors.
pub const NORMALIZATION_TOL: f64 = 1e-10;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Named ambient spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `h(r) = r` on `[0, ∞)`.
    Euclidean,
    /// `h(r) = sin r` on `[0, π)`.
    Sphere,
    /// The self-shrinker space `(ℝ³, e^{-|x|²/4} δ)`, i.e. `rho(s) = e^{-s²/8}`.
    GaussianShrinker,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Euclidean, Preset::Sphere, Preset::GaussianShrinker];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Euclidean => "euclidean",
            Preset::Sphere => "sphere",
            Preset::GaussianShrinker => "gaussian-shrinker",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "flat" => Ok(Preset::Euclidean),
            "sphere" | "round-sphere" => Ok(Preset::Sphere),
            "gaussian-shrinker" | "gaussian" | "shrinker" => Ok(Preset::GaussianShrinker),
            other => Err(Error::InvalidParameter(format!("unknown metric preset `{other}`"))),
        }
    }
}

/// How the warping function is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    ClosedForm,
    ConformalFactor,
    Tabulated,
}

/// A conformal factor `rho(s)` on `[0, s_max)` with its derivative.
#[derive(Clone)]
pub struct ConformalFactor {
    rho: ScalarFn,
    rho_prime: ScalarFn,
    rho_second: Option<ScalarFn>,
    s_max: f64,
}

impl fmt::Debug for ConformalFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConformalFactor")
            .field("s_max", &self.s_max)
            .field("analytic_second_derivative", &self.rho_second.is_some())
            .finish()
    }
}

impl ConformalFactor {
    pub fn new<F, G>(rho: F, rho_prime: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ConformalFactor {
            rho: Arc::new(rho),
            rho_prime: Arc::new(rho_prime),
            rho_second: None,
            s_max: f64::INFINITY,
        }
    }

    pub fn with_extent(mut self, s_max: f64) -> Self {
        self.s_max = s_max;
        self
    }

    pub fn with_second_derivative<F>(mut self, rho_second: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.rho_second = Some(Arc::new(rho_second));
        self
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    #[inline]
    pub fn rho(&self, s: f64) -> f64 {
        (self.rho)(s.abs())
    }

    /// Derivative, extended as an odd function to `s < 0`.
    #[inline]
    pub fn rho_prime(&self, s: f64) -> f64 {
        if s < 0.0 {
            -(self.rho_prime)(-s)
        } else {
            (self.rho_prime)(s)
        }
    }

    /// Second derivative; central difference of `rho_prime` unless an
    /// analytic one was supplied.
    pub fn rho_second(&self, s: f64) -> f64 {
        match &self.rho_second {
            Some(f) => f(s.abs()),
            None => {
                let d = 1e-5 * s.abs().max(1.0);
                (self.rho_prime(s + d) - self.rho_prime(s - d)) / (2.0 * d)
            }
        }
    }
}

/// Integration tables for a conformal factor: `r(s) = ∫₀ˢ rho` and the
/// area potential `∫₀ˢ t rho(t)² dt` on graded nodes.
pub(crate) struct FactorTables {
    pub(crate) factor: ConformalFactor,
    nodes: Vec<f64>,
    r_cum: Vec<f64>,
    i_cum: Vec<f64>,
}

impl FactorTables {
    const GRADING: f64 = 1.0 / 128.0;

    fn build(factor: ConformalFactor) -> Result<Self> {
        let s_cap = if factor.s_max.is_finite() {
            factor.s_max
        } else {
            // Far enough that the remaining radial length is negligible.
            let mut s = 1.0;
            while s < 1e4 && factor.rho(s) > 1e-12 {
                s *= 2.0;
            }
            s
        };
        let mut nodes = vec![0.0];
        let mut s = 0.0;
        while s < s_cap {
            s = (s + Self::GRADING * (1.0 + s)).min(s_cap);
            nodes.push(s);
        }
        for &t in &nodes {
            let v = factor.rho(t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain {
                    what: "conformal factor rho(s) must be positive; s",
                    value: t,
                    lo: 0.0,
                    hi: s_cap,
                });
            }
        }
        let rho = |t: f64| factor.rho(t);
        let r_cum = quad::cumulative(&rho, &nodes, 1e-15, 1e-14)?;
        let area = |t: f64| t * factor.rho(t).powi(2);
        let i_cum = quad::cumulative(&area, &nodes, 1e-15, 1e-14)?;
        Ok(FactorTables { factor, nodes, r_cum, i_cum })
    }

    pub(crate) fn s_cap(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub(crate) fn r_cap(&self) -> f64 {
        *self.r_cum.last().unwrap()
    }

    fn panel_of_s(&self, s: f64) -> usize {
        let k = self.nodes.partition_point(|&v| v <= s);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    pub(crate) fn r_of_s(&self, s: f64) -> f64 {
        let k = self.panel_of_s(s);
        let f = |t: f64| self.factor.rho(t);
        self.r_cum[k] + quad::gauss_panel(&f, self.nodes[k], s)
    }

    /// `∫₀ˢ t rho(t)² dt`, which equals `I(r(s))`.
    pub(crate) fn area_potential(&self, s: f64) -> f64 {
        let k = self.panel_of_s(s);
        let f = |t: f64| t * self.factor.rho(t).powi(2);
        self.i_cum[k] + quad::gauss_panel(&f, self.nodes[k], s)
    }

    pub(crate) fn s_of_r(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let k = self
            .r_cum
            .partition_point(|&v| v <= r)
            .saturating_sub(1)
            .min(self.nodes.len() - 2);
        let (s0, s1) = (self.nodes[k], self.nodes[k + 1]);
        let (r0, r1) = (self.r_cum[k], self.r_cum[k + 1]);
        let mut s = s0 + (s1 - s0) * (r - r0) / (r1 - r0);
        for _ in 0..20 {
            let step = (self.r_of_s(s) - r) / self.factor.rho(s);
            s -= step;
            if step.abs() <= 4.0 * f64::EPSILON * (1.0 + s) {
                break;
            }
        }
        s
    }
}

#[derive(Clone)]
enum Repr {
    Euclidean,
    Sphere,
    Conformal(Arc<FactorTables>),
    Tabulated(Arc<CubicSpline>),
}

/// The warping function `h` of `g = dr² + h(r)² g_S` with its derivatives.
#[derive(Clone)]
pub struct WarpProfile {
    repr: Repr,
    r_max: f64,
    preset: Option<Preset>,
    name: String,
    k0: f64,
}

impl fmt::Debug for WarpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WarpProfile")
            .field("name", &self.name)
            .field("source", &self.source())
            .field("r_max", &self.r_max)
            .finish()
    }
}

/// Build one of the named profiles.
pub fn make_preset(preset: Preset) -> WarpProfile {
    match preset {
        Preset::Euclidean => WarpProfile {
            repr: Repr::Euclidean,
            r_max: f64::INFINITY,
            preset: Some(preset),
            name: preset.name().into(),
            k0: 0.0,
        },
        Preset::Sphere => WarpProfile {
            repr: Repr::Sphere,
            r_max: std::f64::consts::PI,
            preset: Some(preset),
            name: preset.name().into(),
            k0: 1.0,
        },
        Preset::GaussianShrinker => {
            let factor = ConformalFactor::new(
                |s: f64| (-s * s / 8.0).exp(),
                |s: f64| -0.25 * s * (-s * s / 8.0).exp(),
            );
            let mut p = from_conformal_factor(factor).expect("gaussian factor is normalized and positive");
            p.preset = Some(preset);
            p.name = preset.name().into();
            p
        }
    }
}

/// Profile of the metric `rho(s)² δ`, with `h(r) = s rho(s)` and
/// `r(s) = ∫₀ˢ rho`.
pub fn from_conformal_factor(factor: ConformalFactor) -> Result<WarpProfile> {
    let rho0 = factor.rho(0.0);
    if !((rho0 - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::Normalization { rho0 });
    }
    if !(factor.s_max > 0.0) {
        return Err(Error::InvalidParameter("conformal factor needs a positive extent".into()));
    }
    let tables = Arc::new(FactorTables::build(factor)?);
    let r_max = tables.r_cap();
    let mut p = WarpProfile {
        repr: Repr::Conformal(tables),
        r_max,
        preset: None,
        name: "conformal".into(),
        k0: 0.0,
    };
    p.k0 = p.k0_by_differences();
    Ok(p)
}

/// Profile interpolating tabulated `(r, h)` pairs by a C² spline. The table
/// must start at `r = 0`.
pub fn from_table(r: Vec<f64>, h: Vec<f64>) -> Result<WarpProfile> {
    if r.first().copied() != Some(0.0) {
        return Err(Error::InvalidParameter("tabulated warp must start at r = 0".into()));
    }
    use crate::interp::EndCondition::Natural;
    let spline = CubicSpline::new(r, h, Natural, Natural)?;
    let r_max = spline.x_max();
    let mut p = WarpProfile {
        repr: Repr::Tabulated(Arc::new(spline)),
        r_max,
        preset: None,
        name: "tabulated".into(),
        k0: 0.0,
    };
    p.k0 = p.k0_by_differences();
    Ok(p)
}

/// Conformal factor interpolating tabulated `(s, rho)` pairs, clamped to
/// `rho'(0) = 0` so that the metric is smooth at the origin.
pub fn conformal_factor_from_table(s: Vec<f64>, rho: Vec<f64>) -> Result<ConformalFactor> {
    if s.first().copied() != Some(0.0) {
        return Err(Error::InvalidParameter("tabulated conformal factor must start at s = 0".into()));
    }
    use crate::interp::EndCondition::{Clamped, Natural};
    let spline = Arc::new(CubicSpline::new(s, rho, Clamped(0.0), Natural)?);
    let s_max = spline.x_max();
    let (a, b, c) = (spline.clone(), spline.clone(), spline);
    Ok(ConformalFactor::new(move |t| a.value(t), move |t| b.eval_all(t)[1])
        .with_second_derivative(move |t| c.eval_all(t)[2])
        .with_extent(s_max))
}

impl WarpProfile {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    pub fn is_preset(&self, p: Preset) -> bool {
        self.preset == Some(p)
    }

    pub fn source(&self) -> ProfileSource {
        match self.repr {
            Repr::Euclidean | Repr::Sphere => ProfileSource::ClosedForm,
            Repr::Conformal(_) => ProfileSource::ConformalFactor,
            Repr::Tabulated(_) => ProfileSource::Tabulated,
        }
    }

    /// Upper end `r̄` of the radial domain (possibly infinite).
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub(crate) fn factor_tables(&self) -> Option<&Arc<FactorTables>> {
        match &self.repr {
            Repr::Conformal(t) => Some(t),
            _ => None,
        }
    }

    pub(crate) fn spline(&self) -> Option<&CubicSpline> {
        match &self.repr {
            Repr::Tabulated(s) => Some(s),
            _ => None,
        }
    }

    pub fn check_domain(&self, what: &'static str, r: f64) -> Result<()> {
        if r >= 0.0 && r < self.r_max {
            Ok(())
        } else {
            Err(Error::domain(what, r, 0.0, self.r_max))
        }
    }

    /// `[h, h', h'']` at `r`. No domain check.
    pub fn derivatives(&self, r: f64) -> [f64; 3] {
        match &self.repr {
            Repr::Euclidean => [r, 1.0, 0.0],
            Repr::Sphere => {
                let (s, c) = r.sin_cos();
                [s, c, -s]
            }
            Repr::Conformal(t) => {
                let s = t.s_of_r(r);
                let f = &t.factor;
                let rho = f.rho(s);
                let q = f.rho_prime(s) / rho;
                let h = s * rho;
                let dh = 1.0 + s * q;
                let d2h = (q + s * f.rho_second(s) / rho - s * q * q) / rho;
                [h, dh, d2h]
            }
            Repr::Tabulated(sp) => {
                let [v, d1, d2, _] = sp.eval_all(r);
                [v, d1, d2]
            }
        }
    }

    pub fn h(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    pub fn dh(&self, r: f64) -> f64 {
        self.derivatives(r)[1]
    }

    pub fn d2h(&self, r: f64) -> f64 {
        self.derivatives(r)[2]
    }

    /// `K(0) = -h'''(0)`, the limit of the radial curvature at the center.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    fn k0_by_differences(&self) -> f64 {
        // h'' is odd, so h''(d)/d = h'''(0) + O(d²); one Richardson step.
        let d = 5e-3f64.min(0.01 * self.r_max);
        let q = |t: f64| self.d2h(t) / t;
        -(4.0 * q(d) - q(2.0 * d)) / 3.0
    }

    /// `h(r)/r`, with the expansion `1 - K(0) r²/6` near the origin.
    pub fn h_over_r(&self, r: f64) -> f64 {
        if r < SERIES_SWITCH {
            1.0 - self.k0 * r * r / 6.0
        } else {
            self.h(r) / r
        }
    }

    /// Radial sectional curvature `K(r) = -h''(r)/h(r)`.
    pub fn curvature_k(&self, r: f64) -> Result<f64> {
        self.check_domain("r", r)?;
        if r == 0.0 {
            return Ok(self.k0);
        }
        let [h, _, d2h] = self.derivatives(r);
        Ok(-d2h / h)
    }

    /// Evaluate the structural conditions on a caller-supplied grid.
    pub fn check_admissibility(&self, grid: &[f64], tol: f64) -> Result<AdmissibilityReport> {
        for &r in grid {
            self.check_domain("admissibility grid radius", r)?;
        }
        let [h0, dh0, d2h0] = self.derivatives(0.0);
        let mut failures = Vec::new();
        let h0_ok = h0.abs() <= tol;
        let dh0_ok = (dh0 - 1.0).abs() <= tol;
        let d2h0_ok = d2h0.abs() <= tol;
        if !h0_ok {
            failures.push(format!("C1: |h(0)| = {:e} > {tol:e}", h0.abs()));
        }
        if !dh0_ok {
            failures.push(format!("C1: |h'(0) - 1| = {:e} > {tol:e}", (dh0 - 1.0).abs()));
        }
        if !d2h0_ok {
            failures.push(format!("C1: |h''(0)| = {:e} > {tol:e}", d2h0.abs()));
        }

        let mut min_k = f64::INFINITY;
        let mut min_k_at = f64::NAN;
        let mut max_abs_k: f64 = 0.0;
        let mut c2_pass = true;
        for &r in grid {
            let k = self.curvature_k(r)?;
            if k < min_k {
                min_k = k;
                min_k_at = r;
            }
            max_abs_k = max_abs_k.max(k.abs());
            if !(k > 0.0) {
                c2_pass = false;
            }
        }
        if !c2_pass {
            failures.push(format!("C2: min K = {min_k:e} at r = {min_k_at} is not positive"));
        }
        Ok(AdmissibilityReport {
            h0,
            dh0,
            d2h0,
            c1_pass: h0_ok && dh0_ok && d2h0_ok,
            c2_pass,
            min_k,
            min_k_at,
            degenerate_c2: !grid.is_empty() && max_abs_k <= tol,
            failures,
        })
    }
}

/// Outcome of [`WarpProfile::check_admissibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub h0: f64,
    pub dh0: f64,
    pub d2h0: f64,
    pub c1_pass: bool,
    /// `K > 0` at every grid point.
    pub c2_pass: bool,
    pub min_k: f64,
    pub min_k_at: f64,
    /// `K ≡ 0` on the grid (the flat reference case).
    pub degenerate_c2: bool,
    pub failures: Vec<String>,
}

impl AdmissibilityReport {
    pub fn passes(&self) -> bool {
        self.c1_pass && self.c2_pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn preset_values() {
        assert!((make_preset(Preset::Sphere).h(FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert_eq!(make_preset(Preset::Euclidean).h(3.0), 3.0);
        assert_eq!(make_preset(Preset::Sphere).r_max(), PI);
        assert!(make_preset(Preset::Euclidean).r_max().is_infinite());
    }

    #[test]
    fn gaussian_dh_vanishes_at_chart_radius_two() {
        let p = make_preset(Preset::GaussianShrinker);
        let t = p.factor_tables().unwrap();
        let r = t.r_of_s(2.0);
        // h' = 1 - s²/4
        assert!(p.dh(r).abs() < 1e-12);
        let r1 = t.r_of_s(1.0);
        assert!((p.dh(r1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gaussian_radius_at_unit_chart_radius() {
        // Oracle: ∫₀¹ e^{-t²/8} dt by the series Σ (-1/8)^k / (k! (2k+1)).
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..30 {
            if k > 0 {
                term *= -1.0 / 8.0 / k as f64;
            }
            sum += term / (2 * k + 1) as f64;
        }
        let p = make_preset(Preset::GaussianShrinker);
        let r = p.factor_tables().unwrap().r_of_s(1.0);
        assert!((r - sum).abs() < 1e-14);
        assert!((r - 0.9599).abs() < 1e-4);
    }

    #[test]
    fn flat_factor_gives_identity_warp() {
        let p = from_conformal_factor(ConformalFactor::new(|_| 1.0, |_| 0.0)).unwrap();
        for r in [0.0, 0.3, 2.0, 17.0] {
            let [h, dh, d2h] = p.derivatives(r);
            assert!((h - r).abs() < 1e-12 * (1.0 + r));
            assert!((dh - 1.0).abs() < 1e-12);
            assert!(d2h.abs() < 1e-10);
        }
    }

    #[test]
    fn stereographic_factor_gives_sine() {
        let p = from_conformal_factor(ConformalFactor::new(
            |s: f64| 1.0 / (1.0 + s * s / 4.0),
            |s: f64| -0.5 * s / (1.0 + s * s / 4.0).powi(2),
        ))
        .unwrap();
        for r in [0.1, 0.7, FRAC_PI_2, 2.5] {
            let [h, dh, d2h] = p.derivatives(r);
            assert!((h - r.sin()).abs() < 1e-12, "h({r})");
            assert!((dh - r.cos()).abs() < 1e-12);
            assert!((d2h + r.sin()).abs() < 1e-8);
        }
        assert!((p.k0() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalization_and_positivity_are_enforced() {
        let e = from_conformal_factor(ConformalFactor::new(|_| 2.0, |_| 0.0)).unwrap_err();
        assert!(matches!(e, Error::Normalization { .. }));
        let e = from_conformal_factor(ConformalFactor::new(|s: f64| 1.0 - s, |_| -1.0).with_extent(3.0)).unwrap_err();
        assert!(matches!(e, Error::Domain { .. }));
    }

    #[test]
    fn curvature_values() {
        let sphere = make_preset(Preset::Sphere);
        assert!((sphere.curvature_k(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(sphere.curvature_k(0.0).unwrap(), 1.0);
        assert!((sphere.curvature_k(1e-7).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(make_preset(Preset::Euclidean).curvature_k(1.0).unwrap(), 0.0);
        assert!(sphere.curvature_k(4.0).is_err());
        assert!(sphere.curvature_k(-0.1).is_err());
        let g = make_preset(Preset::GaussianShrinker);
        assert!((g.k0() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn admissibility_reports() {
        let grid: Vec<f64> = (1..100).map(|k| PI * k as f64 / 100.0).collect();
        let rep = make_preset(Preset::Sphere).check_admissibility(&grid, 1e-10).unwrap();
        assert!(rep.passes());
        assert!((rep.min_k - 1.0).abs() < 1e-12);

        let flat = make_preset(Preset::Euclidean).check_admissibility(&grid, 1e-10).unwrap();
        assert!(flat.c1_pass);
        assert!(!flat.c2_pass);
        assert!(flat.degenerate_c2);

        let g = make_preset(Preset::GaussianShrinker);
        let t = g.factor_tables().unwrap();
        let ggrid: Vec<f64> = (1..=50).map(|k| t.r_of_s(2.0 * k as f64 / 50.0)).collect();
        let rep = g.check_admissibility(&ggrid, 1e-8).unwrap();
        assert!(rep.passes(), "{:?}", rep.failures);
        // K = 1/(2 rho²) for this factor
        for &r in &ggrid {
            let s = t.s_of_r(r);
            let k = g.curvature_k(r).unwrap();
            assert!((k - 0.5 * (s * s / 4.0).exp()).abs() < 1e-8 * k);
        }
    }

    #[test]
    fn tabulated_profile_tracks_its_data() {
        let r: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let h = r.iter().map(|t| t.sin()).collect();
        let p = from_table(r, h).unwrap();
        assert_eq!(p.source(), ProfileSource::Tabulated);
        assert!((p.h(1.234) - 1.234f64.sin()).abs() < 1e-8);
        assert!((p.d2h(1.0) + 1.0f64.sin()).abs() < 1e-4);
        assert!((p.k0() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("hyperbolic".parse::<Preset>().is_err());
    }
}
