//! Calibration vector fields and their tangential divergences.
//!
//! Points live in the conformal chart, where `g = rho(s)² δ` and `s = |x|`.
//! A candidate tangent plane of Σ at `x` is given by a δ-orthonormal pair
//! `e1, e2`. Since `∇r = x/(s rho)` and `E_i = e_i/rho` is g-orthonormal,
//! `|∇^Σ r|² = Σ g(∇r, E_i)² = (⟨x,e1⟩² + ⟨x,e2⟩²)/s²`.
//!
//! For a field `F` the tangential divergence obeys
//! `div_Σ F = div_{Σ,δ} F + 2 F(ln rho)`, equivalently, with `Y = rho² F`,
//! `div_Σ F = rho⁻² div_{Σ,δ} Y + (2 rho'/(s rho³)) ⟨Y, x^⊥⟩`; the second
//! form drives the finite-difference oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::radial::{ConformalChart, RadialGeometry};
use crate::util::{dot, norm, sub};
use crate::warp::Preset;

/// Field evaluations closer than this to the singular point are rejected.
pub const SINGULAR_GUARD: f64 = 1e-12;

/// Default exclusion radius of the Monte-Carlo sampler around `y`.
pub const SAMPLER_EXCLUSION: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-12;

/// A point of the chart with a candidate tangent 2-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPlaneSample {
    x: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
}

impl TangentPlaneSample {
    pub fn new(x: Vec<f64>, e1: Vec<f64>, e2: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || e1.len() != n || e2.len() != n {
            return Err(Error::InvalidParameter(format!(
                "sample needs dimension >= 2 with matching frame (got {}, {}, {})",
                n,
                e1.len(),
                e2.len()
            )));
        }
        let defect = (dot(&e1, &e1) - 1.0)
            .abs()
            .max((dot(&e2, &e2) - 1.0).abs())
            .max(dot(&e1, &e2).abs());
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidParameter(format!("frame is not orthonormal (defect {defect:e})")));
        }
        Ok(TangentPlaneSample { x, e1, e2 })
    }

    /// Orthonormalize the spanning pair `a, b` (Gram–Schmidt).
    pub fn from_spanning(x: Vec<f64>, a: &[f64], b: &[f64]) -> Result<Self> {
        let na = norm(a);
        if !(na > 0.0) {
            return Err(Error::InvalidParameter("degenerate spanning vectors".into()));
        }
        let e1: Vec<f64> = a.iter().map(|v| v / na).collect();
        let c = dot(b, &e1);
        let mut e2: Vec<f64> = b.iter().zip(&e1).map(|(v, u)| v - c * u).collect();
        // second pass keeps the orthogonality defect at rounding level
        let c = dot(&e2, &e1);
        e2.iter_mut().zip(&e1).for_each(|(v, u)| *v -= c * u);
        let nb = norm(&e2);
        if !(nb > 1e-10 * norm(b)) {
            return Err(Error::InvalidParameter("degenerate spanning vectors".into()));
        }
        e2.iter_mut().for_each(|v| *v /= nb);
        Self::new(x, e1, e2)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn frame(&self) -> (&[f64], &[f64]) {
        (&self.e1, &self.e2)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn s(&self) -> f64 {
        norm(&self.x)
    }

    /// `|∇^Σ r|²`; at the origin every plane counts as radial.
    pub fn grad_sigma_r_sq(&self) -> f64 {
        let s2 = dot(&self.x, &self.x);
        if s2 == 0.0 {
            return 1.0;
        }
        let a = dot(&self.x, &self.e1);
        let b = dot(&self.x, &self.e2);
        ((a * a + b * b) / s2).min(1.0)
    }

    /// Euclidean component of `v` orthogonal to the plane.
    pub fn perp(&self, v: &[f64]) -> Vec<f64> {
        let a = dot(v, &self.e1);
        let b = dot(v, &self.e2);
        v.iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(vi, (u, w))| vi - a * u - b * w)
            .collect()
    }
}

/// `div_Σ Φ = 1 + J(r) h(r)⁻² (1 - |∇^Σ r|²)` for `Φ = φ ∂_r`.
pub fn div_sigma_radial(geom: &RadialGeometry, r: f64, grad_sigma_r_sq: f64) -> Result<f64> {
    let st = geom.state(r)?;
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 + st.j / (st.h * st.h) * (1.0 - grad_sigma_r_sq))
}

/// The error term `(*) = J(r) + I(R)(h'(r) - 1)²`.
pub fn star_term(geom: &RadialGeometry, r: f64, big_r: f64) -> Result<f64> {
    geom.profile().check_domain("R", big_r)?;
    if !(r >= 0.0 && r <= big_r) {
        return Err(Error::domain("r", r, 0.0, big_r));
    }
    let st = geom.state(r)?;
    let ir = geom.integral_i(big_r)?;
    Ok(st.j + ir * (st.dh - 1.0).powi(2))
}

/// The two radial fields on the unit sphere `𝕊ⁿ ⊂ ℝⁿ⁺¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereFieldKind {
    /// `Φ_p = tan(d/2) ∇d_p`, singular at `-p`.
    PhiP,
    /// `Ψ_y = -cot(d/2) ∇d_y`, singular at `y`.
    PsiY,
}

fn check_unit(what: &str, v: &[f64]) -> Result<()> {
    if (norm(v) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("{what} must be a unit vector (|{what}| = {})", norm(v))));
    }
    Ok(())
}

/// Geodesic distance on the unit sphere, accurate also for nearby points.
pub fn sphere_distance(a: &[f64], b: &[f64]) -> f64 {
    let chord = norm(&sub(a, b));
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// Gradient of `d(center, ·)` at `x`, `-(center - cos d x)/sin d`.
pub fn sphere_distance_gradient(center: &[f64], x: &[f64]) -> Vec<f64> {
    let c = dot(center, x);
    let sd = (1.0 - c * c).max(0.0).sqrt();
    center.iter().zip(x).map(|(p, xi)| -(p - c * xi) / sd).collect()
}

/// `Φ_p` or `Ψ_y` at the point `x` of the unit sphere.
///
/// Uses `tan(d/2)/sin d = 2/|x + c|²` and `cot(d/2)/sin d = 2/|x - c|²`,
/// which stay regular at the removable end.
pub fn sphere_field(kind: SphereFieldKind, center: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if center.len() != x.len() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    check_unit("center", center)?;
    check_unit("x", x)?;
    let c = dot(center, x);
    let (chord, sign) = match kind {
        SphereFieldKind::PhiP => (norm(&center.iter().zip(x).map(|(p, q)| p + q).collect::<Vec<_>>()), -1.0),
        SphereFieldKind::PsiY => (norm(&sub(x, center)), 1.0),
    };
    if chord < SINGULAR_GUARD {
        return Err(Error::Singular { distance: chord, min: SINGULAR_GUARD });
    }
    let f = sign * 2.0 / (chord * chord);
    Ok(center.iter().zip(x).map(|(p, xi)| f * (p - c * xi)).collect())
}

/// `W = cos R Φ_p + (1 - cos R) Ψ_y` on the geodesic ball `B_R(p)` of the sphere.
pub fn sphere_w(big_r: f64, p: &[f64], y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if !(big_r > 0.0 && big_r <= std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(Error::domain("R (hemisphere)", big_r, 0.0, std::f64::consts::FRAC_PI_2));
    }
    check_unit("y", y)?;
    if (sphere_distance(p, y) - big_r).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "y must lie at distance R = {big_r} from p (found {})",
            sphere_distance(p, y)
        )));
    }
    let d = sphere_distance(p, x);
    if d > big_r * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::domain("d(p, x)", d, 0.0, big_r));
    }
    combine_sphere_fields(big_r, p, y, x)
}

fn combine_sphere_fields(big_r: f64, p: &[f64], y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let phi = sphere_field(SphereFieldKind::PhiP, p, x)?;
    let psi = sphere_field(SphereFieldKind::PsiY, y, x)?;
    let c = big_r.cos();
    Ok(phi.iter().zip(&psi).map(|(a, b)| c * a + (1.0 - c) * b).collect())
}

/// Inverse stereographic projection of the chart `s = 2 tan(r/2)`, which
/// sends the origin to the last basis vector (the pole `p`).
pub fn inverse_stereographic(x: &[f64]) -> Vec<f64> {
    let s2 = dot(x, x);
    let rho = 1.0 / (1.0 + 0.25 * s2);
    let mut out: Vec<f64> = x.iter().map(|v| v * rho).collect();
    out.push(2.0 * rho - 1.0);
    out
}

pub fn stereographic(point: &[f64]) -> Vec<f64> {
    let n = point.len() - 1;
    let d = 1.0 + point[n];
    point[..n].iter().map(|v| 2.0 * v / d).collect()
}

/// Differential of [`stereographic`] at `point` applied to the tangent vector `v`.
pub fn stereographic_pushforward(point: &[f64], v: &[f64]) -> Vec<f64> {
    let n = point.len() - 1;
    let d = 1.0 + point[n];
    (0..n).map(|i| 2.0 * v[i] / d - 2.0 * point[i] * v[n] / (d * d)).collect()
}

/// Differential of [`inverse_stereographic`] at chart point `x` applied to `v`.
pub fn inverse_stereographic_pushforward(x: &[f64], v: &[f64]) -> Vec<f64> {
    let rho = 1.0 / (1.0 + 0.25 * dot(x, x));
    let xv = dot(x, v);
    let mut out: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| rho * vi - 0.5 * rho * rho * xv * xi).collect();
    out.push(-rho * rho * xv);
    out
}

/// `V = (x - y)/(rho(|x|)² |x - y|²)` in chart components.
pub fn conformal_v(chart: &ConformalChart, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let d = sub(x, y);
    let d2 = dot(&d, &d);
    if d2.sqrt() < SINGULAR_GUARD {
        return Err(Error::Singular { distance: d2.sqrt(), min: SINGULAR_GUARD });
    }
    let rho = chart.rho(norm(x))?;
    let f = 1.0 / (rho * rho * d2);
    Ok(d.iter().map(|v| v * f).collect())
}

pub(crate) fn rho_prime_over_s(chart: &ConformalChart, s: f64) -> f64 {
    let s = s.max(1e-8);
    chart.factor_at(s).1 / s
}

/// `div_Σ V = 2|A|² - ½ (rho'/(s rho²))² |x^⊥|²` with
/// `A = y^⊥/(rho d²) - (1/(rho d²) + rho'/(2 s rho²)) x^⊥`.
pub fn div_sigma_v(chart: &ConformalChart, y: &[f64], sample: &TangentPlaneSample) -> Result<f64> {
    let x = sample.x();
    let d = norm(&sub(x, y));
    if d < SINGULAR_GUARD {
        return Err(Error::Singular { distance: d, min: SINGULAR_GUARD });
    }
    let s = norm(x);
    let rho = chart.rho(s)?;
    let q = rho_prime_over_s(chart, s) / (rho * rho);
    let a = 1.0 / (rho * d * d);
    let xp = sample.perp(x);
    let yp = sample.perp(y);
    let av: Vec<f64> = yp.iter().zip(&xp).map(|(u, v)| a * u - (a + 0.5 * q) * v).collect();
    Ok(2.0 * dot(&av, &av) - 0.5 * q * q * dot(&xp, &xp))
}

/// Which construction of the calibration field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Convex combination of `Φ_p` and `Ψ_y` on the round sphere, read in
    /// the stereographic chart.
    SphereExtrinsic,
    /// `W = Φ - 2 I(R) V` in the conformal chart.
    Conformal,
}

/// The field `W` on the ball of geodesic radius `R` with singular boundary point `y`.
#[derive(Debug, Clone)]
pub struct CalibrationField {
    kind: FieldKind,
    geom: RadialGeometry,
    chart: ConformalChart,
    big_r: f64,
    big_s: f64,
    y: Vec<f64>,
    i_big_r: f64,
    h_big_r: f64,
}

impl CalibrationField {
    pub fn conformal(geom: RadialGeometry, chart: ConformalChart, big_r: f64, y: Vec<f64>) -> Result<Self> {
        if !(big_r > 0.0) {
            return Err(Error::domain("R", big_r, 0.0, geom.r_max()));
        }
        let st = geom.state(big_r)?;
        let big_s = chart.s_of_r(big_r)?;
        chart.rho(big_s)?;
        if y.len() < 2 || (norm(&y) - big_s).abs() > 1e-9 * big_s {
            return Err(Error::InvalidParameter(format!(
                "singular point must satisfy |y| = s(R) = {big_s} (got |y| = {})",
                norm(&y)
            )));
        }
        Ok(CalibrationField {
            kind: FieldKind::Conformal,
            geom,
            chart,
            big_r,
            big_s,
            y,
            i_big_r: st.i,
            h_big_r: st.h,
        })
    }

    /// The extrinsic sphere field for `R ≤ π/2`, with `y` given in the
    /// stereographic chart (`|y| = 2 tan(R/2)`).
    pub fn sphere_extrinsic(big_r: f64, y: Vec<f64>) -> Result<Self> {
        if !(big_r > 0.0 && big_r <= std::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(Error::domain("R (hemisphere)", big_r, 0.0, std::f64::consts::FRAC_PI_2));
        }
        let profile = crate::warp::make_preset(Preset::Sphere);
        let chart = ConformalChart::for_profile(&profile)?;
        let mut f = Self::conformal(RadialGeometry::new(profile), chart, big_r, y)?;
        f.kind = FieldKind::SphereExtrinsic;
        Ok(f)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn geom(&self) -> &RadialGeometry {
        &self.geom
    }

    pub fn chart(&self) -> &ConformalChart {
        &self.chart
    }

    /// Geodesic ball radius `R`.
    pub fn radius(&self) -> f64 {
        self.big_r
    }

    /// Chart ball radius `s(R)`.
    pub fn chart_radius(&self) -> f64 {
        self.big_s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn i_of_radius(&self) -> f64 {
        self.i_big_r
    }

    pub fn h_of_radius(&self) -> f64 {
        self.h_big_r
    }

    /// `|B_R²| = 2π I(R)`.
    pub fn disk_area(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.i_big_r
    }

    fn check_point(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.y.len() {
            return Err(Error::InvalidParameter("dimension mismatch".into()));
        }
        let d = norm(&sub(x, &self.y));
        if d < SINGULAR_GUARD {
            return Err(Error::Singular { distance: d, min: SINGULAR_GUARD });
        }
        Ok(d)
    }

    /// Chart components of `W` at `x`.
    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        match self.kind {
            FieldKind::Conformal => self.conformal_value(x),
            FieldKind::SphereExtrinsic => {
                let p = self.pole();
                let xs = inverse_stereographic(x);
                let ys = inverse_stereographic(&self.y);
                // no ball check: the oracle stencil may step just outside
                let w = combine_sphere_fields(self.big_r, &p, &ys, &xs)?;
                Ok(stereographic_pushforward(&xs, &w))
            }
        }
    }

    fn pole(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim() + 1];
        p[self.dim()] = 1.0;
        p
    }

    fn conformal_value(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = norm(x);
        let v = conformal_v(&self.chart, &self.y, x)?;
        let c = 2.0 * self.i_big_r;
        if s == 0.0 {
            return Ok(v.iter().map(|vi| -c * vi).collect());
        }
        let pt = self.chart.point(s)?;
        let phi = self.geom.phi(pt.r)?;
        let f = phi / (s * pt.rho);
        Ok(x.iter().zip(&v).map(|(xi, vi)| f * xi - c * vi).collect())
    }

    /// Exact tangential divergence at the sample.
    pub fn div_exact(&self, sample: &TangentPlaneSample) -> Result<f64> {
        self.check_point(sample.x())?;
        match self.kind {
            FieldKind::Conformal => {
                let r = self.chart.r_of_s(sample.s())?;
                let radial = div_sigma_radial(&self.geom, r, sample.grad_sigma_r_sq())?;
                Ok(radial - 2.0 * self.i_big_r * div_sigma_v(&self.chart, &self.y, sample)?)
            }
            FieldKind::SphereExtrinsic => self.sphere_div(sample),
        }
    }

    /// On the sphere `div_Σ Φ_p = 1 - tan²(d_p/2)(1 - |∇^Σ d_p|²)` and
    /// `div_Σ Ψ_y = 1 - cot²(d_y/2)(1 - |∇^Σ d_y|²)`, evaluated with the
    /// chart frame carried to the sphere.
    fn sphere_div(&self, sample: &TangentPlaneSample) -> Result<f64> {
        let x = sample.x();
        let xs = inverse_stereographic(x);
        let ys = inverse_stereographic(&self.y);
        let p = self.pole();
        let rho = 1.0 / (1.0 + 0.25 * dot(x, x));
        let (e1, e2) = sample.frame();
        let f1: Vec<f64> = inverse_stereographic_pushforward(x, e1).iter().map(|v| v / rho).collect();
        let f2: Vec<f64> = inverse_stereographic_pushforward(x, e2).iter().map(|v| v / rho).collect();
        let tangential = |center: &[f64]| -> f64 {
            let g = sphere_distance_gradient(center, &xs);
            if g.iter().any(|v| !v.is_finite()) {
                return 1.0;
            }
            (dot(&g, &f1).powi(2) + dot(&g, &f2).powi(2)).min(1.0)
        };
        let dp = sphere_distance(&p, &xs);
        let dy = sphere_distance(&ys, &xs);
        if dy < SINGULAR_GUARD {
            return Err(Error::Singular { distance: dy, min: SINGULAR_GUARD });
        }
        let div_phi = if dp == 0.0 { 1.0 } else { 1.0 - (0.5 * dp).tan().powi(2) * (1.0 - tangential(&p)) };
        let div_psi = 1.0 - (0.5 * dy).tan().powi(-2) * (1.0 - tangential(&ys));
        let c = self.big_r.cos();
        Ok(c * div_phi + (1.0 - c) * div_psi)
    }

    /// `1 + (*)(r, R) h(r)⁻² (1 - |∇^Σ r|²)`, an upper bound for `div_Σ W`.
    pub fn div_bound(&self, sample: &TangentPlaneSample) -> Result<f64> {
        let s = sample.s();
        if s == 0.0 {
            return Ok(1.0);
        }
        let r = self.chart.r_of_s(s)?;
        let st = self.geom.state(r)?;
        let star = st.j + self.i_big_r * (st.dh - 1.0).powi(2);
        Ok(1.0 + star / (st.h * st.h) * (1.0 - sample.grad_sigma_r_sq()))
    }

    /// `|⟨W, ∇r⟩_g| / |W|_g`, which by conformality is the euclidean
    /// `|⟨W, x/|x|⟩| / |W|` in the chart.
    pub fn tangency_residual(&self, x: &[f64]) -> Result<f64> {
        let w = self.value(x)?;
        let nw = norm(&w);
        let s = norm(x);
        if nw == 0.0 || s == 0.0 {
            return Ok(0.0);
        }
        Ok(dot(&w, x).abs() / (s * nw))
    }
}

/// Finite-difference tangential divergence of the field: a 5-point stencil
/// for `div_{Σ,δ}(rho² W)` along the frame plus the conformal correction.
pub fn fd_div_oracle(field: &CalibrationField, sample: &TangentPlaneSample, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive (got {step})")));
    }
    let x = sample.x();
    let dist = norm(&sub(x, field.y()));
    if dist < 10.0 * step {
        return Err(Error::Singular { distance: dist, min: 10.0 * step });
    }
    let chart = field.chart();
    let y_at = |p: &[f64]| -> Result<Vec<f64>> {
        let rho = chart.rho(norm(p))?;
        Ok(field.value(p)?.into_iter().map(|v| v * rho * rho).collect())
    };
    let (e1, e2) = sample.frame();
    let mut div_delta = 0.0;
    for e in [e1, e2] {
        let at = |t: f64| -> Result<f64> {
            let p: Vec<f64> = x.iter().zip(e).map(|(xi, ei)| xi + t * ei).collect();
            Ok(dot(&y_at(&p)?, e))
        };
        div_delta += (-at(2.0 * step)? + 8.0 * at(step)? - 8.0 * at(-step)? + at(-2.0 * step)?) / (12.0 * step);
    }
    let s = norm(x);
    let rho = chart.rho(s)?;
    let yx = y_at(x)?;
    let correction = 2.0 * rho_prime_over_s(chart, s) / rho.powi(3) * dot(&yx, &sample.perp(x));
    Ok(div_delta / (rho * rho) + correction)
}

/// Deterministic stream for sample `index` under `master_seed`.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Unit vector uniformly distributed on the sphere `𝕊ⁿ⁻¹`.
pub fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vector(rng, n);
        let l = norm(&v);
        if l > 1e-8 {
            return v.into_iter().map(|c| c / l).collect();
        }
    }
}

/// Sample `index`: `x` uniform in the chart ball `|x| ≤ S` and at least
/// `exclusion` away from `y`, frame from two gaussian vectors.
pub fn random_sample(master_seed: u64, index: u64, big_s: f64, y: &[f64], exclusion: f64) -> TangentPlaneSample {
    let n = y.len();
    let mut rng = sample_rng(master_seed, index);
    loop {
        let x: Vec<f64> = (0..n).map(|_| big_s * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if norm(&x) > big_s || norm(&sub(&x, y)) < exclusion {
            continue;
        }
        let a = gaussian_vector(&mut rng, n);
        let b = gaussian_vector(&mut rng, n);
        if let Ok(sample) = TangentPlaneSample::from_spanning(x, &a, &b) {
            return sample;
        }
    }
}

/// Sample `index` on the boundary sphere `|x| = S`, away from `y`.
pub fn random_boundary_point(master_seed: u64, index: u64, big_s: f64, y: &[f64], exclusion: f64) -> Vec<f64> {
    let mut rng = sample_rng(master_seed, index);
    loop {
        let x: Vec<f64> = random_direction(&mut rng, y.len()).into_iter().map(|v| v * big_s).collect();
        if norm(&sub(&x, y)) >= exclusion {
            return x;
        }
    }
}

/// Per-sample outcome of a Monte-Carlo sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: u64,
    pub s: f64,
    pub grad_sigma_r_sq: f64,
    pub div_exact: f64,
    pub div_bound: f64,
    pub oracle: Option<f64>,
}

impl SampleRecord {
    pub fn oracle_rel_err(&self) -> Option<f64> {
        self.oracle.map(|o| (self.div_exact - o).abs() / self.div_exact.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub samples: usize,
    pub seed: u64,
    pub exclusion: f64,
    /// Finite-difference step for the oracle, `None` to skip it.
    pub oracle_step: Option<f64>,
}

/// Evaluate `div_exact`, the bound and optionally the oracle over seeded
/// random samples. The result is independent of the thread count.
pub fn sweep(field: &CalibrationField, opts: &SweepOptions) -> Result<Vec<SampleRecord>> {
    let exclusion = match opts.oracle_step {
        Some(h) => opts.exclusion.max(10.0 * h),
        None => opts.exclusion,
    };
    (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| {
            let sample = random_sample(opts.seed, i, field.chart_radius(), field.y(), exclusion);
            let oracle = match opts.oracle_step {
                Some(h) => Some(fd_div_oracle(field, &sample, h)?),
                None => None,
            };
            Ok(SampleRecord {
                index: i,
                s: sample.s(),
                grad_sigma_r_sq: sample.grad_sigma_r_sq(),
                div_exact: field.div_exact(&sample)?,
                div_bound: field.div_bound(&sample)?,
                oracle,
            })
        })
        .collect()
}

/// Tangency residuals at seeded random boundary points.
pub fn tangency_sweep(field: &CalibrationField, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let exclusion = 1e-3 * field.chart_radius();
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = random_boundary_point(seed, i, field.chart_radius(), field.y(), exclusion);
            field.tangency_residual(&x)
        })
        .collect()
}

/// Flux ratios on the circle of geodesic radius `eps` around `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxRow {
    pub eps: f64,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// For each `eps`, evaluate `⟨W, -∇d_y⟩_g π eps / |B_R²|` at `directions`
/// seeded points `x = y + (eps/rho(S)) u` inside the ball, to first order
/// in `eps` the points at geodesic distance `eps` from `y`.
pub fn singular_flux_check(field: &CalibrationField, eps_list: &[f64], directions: usize, seed: u64) -> Result<Vec<FluxRow>> {
    let big_s = field.chart_radius();
    let rho_s = field.chart().rho(big_s)?;
    let y = field.y();
    let yhat: Vec<f64> = y.iter().map(|v| v / big_s).collect();
    let area = field.disk_area();
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let t = eps / rho_s;
        if !(t > 0.0 && t < 0.1 * big_s) {
            return Err(Error::domain("eps (chart)", t, 0.0, 0.1 * big_s));
        }
        let ratios = (0..directions as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i);
                let (u, x) = loop {
                    let u = random_direction(&mut rng, y.len());
                    if dot(&u, &yhat) > -0.05 {
                        continue;
                    }
                    let x: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + t * b).collect();
                    if norm(&x) < big_s {
                        break (u, x);
                    }
                };
                let w = field.value(&x)?;
                let rho = field.chart().rho(norm(&x))?;
                Ok(-rho * dot(&w, &u) * std::f64::consts::PI * eps / area)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = crate::util::pairwise_sum(&ratios) / ratios.len() as f64;
        rows.push(FluxRow {
            eps,
            mean_ratio: mean,
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::make_preset;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn geom(p: Preset) -> (RadialGeometry, ConformalChart) {
        let prof = make_preset(p);
        let chart = ConformalChart::for_profile(&prof).unwrap();
        (RadialGeometry::new(prof), chart)
    }

    fn field(p: Preset, big_r: f64) -> CalibrationField {
        let (g, c) = geom(p);
        let s = c.s_of_r(big_r).unwrap();
        CalibrationField::conformal(g, c, big_r, vec![s, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn radial_divergence_values() {
        let (e, _) = geom(Preset::Euclidean);
        assert_eq!(div_sigma_radial(&e, 2.0, 0.3).unwrap(), 1.0);
        let (s, _) = geom(Preset::Sphere);
        assert_eq!(div_sigma_radial(&s, 1.0, 1.0).unwrap(), 1.0);
        // 1 + J/h² = 1 - 1 on a plane orthogonal to ∂_r at the equator
        assert!(div_sigma_radial(&s, FRAC_PI_2, 0.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn radial_divergence_matches_finite_differences() {
        // finite-difference divergence of Φ alone, same decomposition as the oracle
        let (g, c) = geom(Preset::Sphere);
        let x = vec![2.0, 0.0, 0.0];
        let sample = TangentPlaneSample::new(x.clone(), vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap();
        let phi_at = |p: &[f64]| -> Vec<f64> {
            let s = norm(p);
            let pt = c.point(s).unwrap();
            let f = g.phi(pt.r).unwrap() / (s * pt.rho);
            p.iter().map(|v| v * f * pt.rho * pt.rho).collect()
        };
        let h = 1e-4;
        let (e1, e2) = sample.frame();
        let mut div_delta = 0.0;
        for e in [e1, e2] {
            let at = |t: f64| {
                let p: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + t * b).collect();
                dot(&phi_at(&p), e)
            };
            div_delta += (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
        }
        let rho = c.rho(2.0).unwrap();
        let yx = phi_at(&x);
        let fd = div_delta / (rho * rho) + 2.0 * c.rho_prime(2.0).unwrap() / (2.0 * rho.powi(3)) * dot(&yx, &sample.perp(&x));
        assert!(fd.abs() < 1e-8, "{fd}");
    }

    #[test]
    fn star_term_values() {
        let (e, _) = geom(Preset::Euclidean);
        assert_eq!(star_term(&e, 0.4, 3.0).unwrap(), 0.0);
        let (s, _) = geom(Preset::Sphere);
        assert!((star_term(&s, FRAC_PI_3, FRAC_PI_3).unwrap() + 0.125).abs() < 1e-14);
        let (g, c) = geom(Preset::GaussianShrinker);
        let r = c.r_of_s(2.0).unwrap();
        let e1 = (-1.0f64).exp();
        let oracle = -4.0 * e1 + (1.0 - e1) * 2.0;
        assert!((star_term(&g, r, r).unwrap() - oracle).abs() < 1e-12);
        assert!(star_term(&s, 1.0, 0.5).is_err());
    }

    #[test]
    fn sphere_field_magnitudes() {
        let p = [0.0, 0.0, 0.0, 1.0];
        let x = [1.0, 0.0, 0.0, 0.0];
        let v = sphere_field(SphereFieldKind::PhiP, &p, &p).unwrap();
        assert!(norm(&v) == 0.0);
        let v = sphere_field(SphereFieldKind::PhiP, &p, &x).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-15);
        let v = sphere_field(SphereFieldKind::PsiY, &x, &p).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-15);
        // points toward y, i.e. against the gradient of d_y
        assert!(dot(&v, &sphere_distance_gradient(&x, &p)) < 0.0);
        assert!(sphere_field(SphereFieldKind::PsiY, &x, &x).is_err());
    }

    #[test]
    fn sphere_w_at_hemisphere() {
        let p = [0.0, 0.0, 0.0, 1.0];
        let y = [1.0, 0.0, 0.0, 0.0];
        let x = [0.0, 1.0, 0.0, 0.0];
        let w = sphere_w(FRAC_PI_2, &p, &y, &x).unwrap();
        let psi = sphere_field(SphereFieldKind::PsiY, &y, &x).unwrap();
        for (a, b) in w.iter().zip(&psi) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(dot(&w, &sphere_distance_gradient(&p, &x)).abs() < 1e-15);
        assert!(sphere_w(2.0, &p, &y, &x).is_err());
    }

    #[test]
    fn conformal_v_values() {
        let (_, flat) = geom(Preset::Euclidean);
        let v = conformal_v(&flat, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![-1.0, 0.0]);
        let (_, sph) = geom(Preset::Sphere);
        let y = [2.0, 0.0, 0.0];
        let x = [0.0, 2.0, 0.0];
        let v = conformal_v(&sph, &y, &x).unwrap();
        let rho = sph.rho(2.0).unwrap();
        let grad_r: Vec<f64> = x.iter().map(|c| c / (2.0 * rho)).collect();
        let g_inner = rho * rho * dot(&v, &grad_r);
        assert!((g_inner - 0.5).abs() < 1e-15);
    }

    #[test]
    fn div_v_vanishes_when_plane_contains_x_and_y() {
        let (_, flat) = geom(Preset::Euclidean);
        let s = TangentPlaneSample::new(vec![0.2, 0.3, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(div_sigma_v(&flat, &[1.0, 0.0, 0.0], &s).unwrap().abs() < 1e-15);
    }

    #[test]
    fn div_v_matches_expanded_form() {
        let (_, c) = geom(Preset::GaussianShrinker);
        let y = [2.0, 0.0, 0.0];
        for i in 0..50 {
            let s = random_sample(11, i, 2.0, &y, 1e-3);
            let x = s.x();
            let r = norm(x);
            let rho = c.rho(r).unwrap();
            let rp = c.rho_prime(r).unwrap();
            let dv = sub(x, &y);
            let d2 = dot(&dv, &dv);
            let dp = s.perp(&dv);
            let xp = s.perp(x);
            let expanded = 2.0 * dot(&dp, &dp) / (rho * rho * d2 * d2) + 2.0 * rp / (r * rho.powi(3)) * dot(&dp, &xp) / d2;
            let exact = div_sigma_v(&c, &y, &s).unwrap();
            assert!((exact - expanded).abs() <= 1e-9 * exact.abs().max(1.0), "{exact} vs {expanded}");
        }
    }

    #[test]
    fn grad_sigma_r_sq_matches_metric_computation() {
        // Compare with g(∇r, E_i) for E_i = e_i/rho and ∇r = x/(s rho).
        let (_, c) = geom(Preset::Sphere);
        let s = random_sample(3, 0, 2.0, &[2.0, 0.0, 0.0], 1e-3);
        let x = s.x();
        let r = norm(x);
        let rho = c.rho(r).unwrap();
        let grad_r: Vec<f64> = x.iter().map(|v| v / (r * rho)).collect();
        let (e1, e2) = s.frame();
        let g = |a: &[f64], b: &[f64]| rho * rho * dot(a, b);
        let e1g: Vec<f64> = e1.iter().map(|v| v / rho).collect();
        let e2g: Vec<f64> = e2.iter().map(|v| v / rho).collect();
        let direct = g(&grad_r, &e1g).powi(2) + g(&grad_r, &e2g).powi(2);
        assert!((direct - s.grad_sigma_r_sq()).abs() < 1e-14);
    }

    #[test]
    fn boundary_tangency_of_w() {
        for (p, big_r) in [(Preset::Sphere, FRAC_PI_2), (Preset::GaussianShrinker, 1.2), (Preset::Euclidean, 1.0)] {
            let f = field(p, big_r);
            let res = tangency_sweep(&f, 200, 5).unwrap();
            assert!(res.iter().all(|&t| t <= 1e-10), "{p}");
        }
    }

    #[test]
    fn euclidean_radial_plane_has_unit_divergence() {
        let f = field(Preset::Euclidean, 1.0);
        let s = TangentPlaneSample::new(vec![0.3, 0.2, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!((f.div_exact(&s).unwrap() - 1.0).abs() < 1e-15);
        assert!((fd_div_oracle(&f, &s, 1e-4).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn oracle_matches_exact_divergence() {
        for (p, big_r) in [(Preset::Sphere, 1.2), (Preset::GaussianShrinker, 1.0), (Preset::Euclidean, 1.0)] {
            let f = field(p, big_r);
            let h = 1e-4 * f.chart_radius();
            let recs = sweep(&f, &SweepOptions { samples: 200, seed: 9, exclusion: 1e-6, oracle_step: Some(h) }).unwrap();
            for r in recs {
                assert!(r.oracle_rel_err().unwrap() <= 1e-6, "{p}: {r:?}");
            }
        }
    }

    #[test]
    fn extrinsic_and_conformal_fields_coincide() {
        for big_r in [FRAC_PI_3, FRAC_PI_2] {
            let conf = field(Preset::Sphere, big_r);
            let ext = CalibrationField::sphere_extrinsic(big_r, conf.y().to_vec()).unwrap();
            for i in 0..100 {
                let s = random_sample(1, i, conf.chart_radius(), conf.y(), 1e-3);
                let a = conf.value(s.x()).unwrap();
                let b = ext.value(s.x()).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-10 * (1.0 + u.abs()), "{a:?} vs {b:?}");
                }
                let da = conf.div_exact(&s).unwrap();
                let db = ext.div_exact(&s).unwrap();
                assert!((da - db).abs() < 1e-8 * da.abs().max(1.0), "{da} vs {db}");
            }
        }
    }

    #[test]
    fn stereographic_round_trip() {
        let x = [0.3, -1.2, 0.7];
        let back = stereographic(&inverse_stereographic(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let v = [0.1, 0.4, -0.2];
        let pushed = stereographic_pushforward(&inverse_stereographic(&x), &inverse_stereographic_pushforward(&x, &v));
        for (a, b) in v.iter().zip(&pushed) {
            assert!((a - b).abs() < 1e-14);
        }
        let rho = 1.0 / (1.0 + 0.25 * dot(&x, &x));
        assert!((norm(&inverse_stereographic_pushforward(&x, &v)) - rho * norm(&v)).abs() < 1e-14);
    }

    #[test]
    fn singular_flux_ratio_tends_to_one() {
        for (p, big_r) in [(Preset::Euclidean, 1.0), (Preset::Sphere, FRAC_PI_2)] {
            let f = field(p, big_r);
            let rows = singular_flux_check(&f, &[1e-2, 1e-3], 64, 2).unwrap();
            assert!((rows[1].mean_ratio - 1.0).abs() < 1e-2, "{p}: {rows:?}");
            assert!((rows[1].mean_ratio - 1.0).abs() < (rows[0].mean_ratio - 1.0).abs() + 1e-3);
        }
    }

    #[test]
    fn sweep_is_reproducible() {
        let f = field(Preset::Sphere, 1.0);
        let o = SweepOptions { samples: 64, seed: 4, exclusion: 1e-6, oracle_step: None };
        assert_eq!(sweep(&f, &o).unwrap(), sweep(&f, &o).unwrap());
    }
}
