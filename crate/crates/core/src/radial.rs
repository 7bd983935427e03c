//! Radial potentials of a warped product and its conformal chart.
//!
//! With `I(r) = ∫₀ʳ h`, `φ = I/h` and `J(r) = 2∫₀ʳ I h''`, integration by
//! parts gives `J = 2 I h' - h²`; that identity is the evaluation path and
//! the quadrature form is kept for comparison.
//!
//! The chart `s(r)` solves `ds/dr = s/h` with `s ~ r` at the origin, so that
//! `g = rho(s)² δ` with `rho(s) = h(r(s))/s`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::hermite;
use crate::quad;
use crate::warp::{FactorTables, Preset, WarpProfile, SERIES_SWITCH};

/// Radial quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub r: f64,
    pub h: f64,
    pub dh: f64,
    pub d2h: f64,
    pub i: f64,
    pub phi: f64,
    pub j: f64,
}

#[derive(Debug, Clone)]
pub struct RadialGeometry {
    profile: WarpProfile,
}

impl RadialGeometry {
    pub fn new(profile: WarpProfile) -> Self {
        RadialGeometry { profile }
    }

    pub fn profile(&self) -> &WarpProfile {
        &self.profile
    }

    pub fn r_max(&self) -> f64 {
        self.profile.r_max()
    }

    fn i_unchecked(&self, r: f64) -> f64 {
        match self.profile.preset() {
            Some(Preset::Euclidean) => return 0.5 * r * r,
            Some(Preset::Sphere) => return 2.0 * (0.5 * r).sin().powi(2),
            _ => {}
        }
        if let Some(t) = self.profile.factor_tables() {
            t.area_potential(t.s_of_r(r))
        } else if let Some(sp) = self.profile.spline() {
            sp.antiderivative(r)
        } else {
            unreachable!("profile without closed form, factor or table")
        }
    }

    /// `I(r) = ∫₀ʳ h`.
    pub fn integral_i(&self, r: f64) -> Result<f64> {
        self.profile.check_domain("r", r)?;
        Ok(self.i_unchecked(r))
    }

    /// `I(r)` by adaptive quadrature of `h`, bypassing closed forms.
    pub fn integral_i_quadrature(&self, r: f64) -> Result<f64> {
        self.profile.check_domain("r", r)?;
        quad::integrate(|t| self.profile.h(t), 0.0, r, quad::ABS_TOL, quad::REL_TOL)
    }

    fn phi_from(&self, r: f64, i: f64, h: f64) -> f64 {
        if r < SERIES_SWITCH {
            0.5 * r + self.profile.k0() * r.powi(3) / 24.0
        } else {
            i / h
        }
    }

    /// `φ(r) = I(r)/h(r)`, with `φ(0) = 0`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        self.profile.check_domain("r", r)?;
        if r < SERIES_SWITCH {
            return Ok(self.phi_from(r, 0.0, 0.0));
        }
        Ok(self.i_unchecked(r) / self.profile.h(r))
    }

    /// `J(r) = 2∫₀ʳ I h''`.
    pub fn j_integral(&self, r: f64) -> Result<f64> {
        Ok(self.state(r)?.j)
    }

    /// `J(r)` by adaptive quadrature of `2 I h''`.
    pub fn j_quadrature(&self, r: f64) -> Result<f64> {
        self.profile.check_domain("r", r)?;
        let v = quad::integrate(
            |t| self.i_unchecked(t) * self.profile.d2h(t),
            0.0,
            r,
            quad::ABS_TOL,
            quad::REL_TOL,
        )?;
        Ok(2.0 * v)
    }

    /// Area `2π I(R)` of the totally geodesic disk of radius `R`.
    pub fn disk_area(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("R", r, 0.0, self.r_max()));
        }
        Ok(2.0 * std::f64::consts::PI * self.integral_i(r)?)
    }

    pub fn state(&self, r: f64) -> Result<RadialState> {
        self.profile.check_domain("r", r)?;
        let [h, dh, d2h] = self.profile.derivatives(r);
        let i = self.i_unchecked(r);
        let j = match self.profile.preset() {
            Some(Preset::Euclidean) => 0.0,
            Some(Preset::Sphere) => -4.0 * (0.5 * r).sin().powi(4),
            _ => 2.0 * i * dh - h * h,
        };
        Ok(RadialState { r, h, dh, d2h, i, phi: self.phi_from(r, i, h), j })
    }
}

#[derive(Clone)]
enum ChartKind {
    Identity,
    Stereographic,
    Factor(Arc<FactorTables>),
    Numeric(Arc<NumericChart>),
}

/// The diffeomorphism `r ↔ s` and the conformal factor `rho`.
#[derive(Clone)]
pub struct ConformalChart {
    kind: ChartKind,
    s_max: f64,
    r_max: f64,
}

impl fmt::Debug for ConformalChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConformalChart")
            .field("kind", &self.kind_name())
            .field("s_max", &self.s_max)
            .finish()
    }
}

/// Chart radius, geodesic radius and factor at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub s: f64,
    pub r: f64,
    pub rho: f64,
    pub rho_prime: f64,
}

impl ConformalChart {
    /// The chart in closed form where one exists (identity, stereographic
    /// `s = 2 tan(r/2)`, or the defining conformal factor), otherwise the
    /// numerically integrated chart at default resolution.
    pub fn for_profile(profile: &WarpProfile) -> Result<Self> {
        match profile.preset() {
            Some(Preset::Euclidean) => {
                return Ok(ConformalChart { kind: ChartKind::Identity, s_max: f64::INFINITY, r_max: f64::INFINITY })
            }
            Some(Preset::Sphere) => {
                return Ok(ConformalChart {
                    kind: ChartKind::Stereographic,
                    s_max: f64::INFINITY,
                    r_max: std::f64::consts::PI,
                })
            }
            _ => {}
        }
        if let Some(t) = profile.factor_tables() {
            return Ok(ConformalChart { kind: ChartKind::Factor(t.clone()), s_max: t.s_cap(), r_max: t.r_cap() });
        }
        build_chart(profile, DEFAULT_CHART_RESOLUTION)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ChartKind::Identity => "identity",
            ChartKind::Stereographic => "stereographic",
            ChartKind::Factor(_) => "conformal-factor",
            ChartKind::Numeric(_) => "numeric",
        }
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn s_of_r(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r < self.r_max) {
            return Err(Error::domain("r", r, 0.0, self.r_max));
        }
        Ok(match &self.kind {
            ChartKind::Identity => r,
            ChartKind::Stereographic => 2.0 * (0.5 * r).tan(),
            ChartKind::Factor(t) => t.s_of_r(r),
            ChartKind::Numeric(c) => c.s_of_r(r),
        })
    }

    pub fn r_of_s(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(self.r_unchecked(s))
    }

    fn check_s(&self, s: f64) -> Result<()> {
        if s >= 0.0 && s < self.s_max {
            Ok(())
        } else {
            Err(Error::domain("s", s, 0.0, self.s_max))
        }
    }

    fn r_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            ChartKind::Identity => s,
            ChartKind::Stereographic => 2.0 * (0.5 * s).atan(),
            ChartKind::Factor(t) => t.r_of_s(s),
            ChartKind::Numeric(c) => c.r_of_s(s),
        }
    }

    /// `(rho, rho')` at chart radius `s`, without a domain check.
    pub(crate) fn factor_at(&self, s: f64) -> (f64, f64) {
        match &self.kind {
            ChartKind::Identity => (1.0, 0.0),
            ChartKind::Stereographic => {
                let rho = 1.0 / (1.0 + 0.25 * s * s);
                (rho, -0.5 * s * rho * rho)
            }
            ChartKind::Factor(t) => (t.factor.rho(s), t.factor.rho_prime(s)),
            ChartKind::Numeric(c) => c.factor_at(s),
        }
    }

    pub fn rho(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(self.factor_at(s).0)
    }

    pub fn rho_prime(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(self.factor_at(s).1)
    }

    /// `rho''` by central difference of `rho'` (odd extension below 0).
    pub fn rho_second(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        let d = 1e-4 * s.max(1.0);
        let f = |t: f64| {
            let v = self.factor_at(t.abs()).1;
            if t < 0.0 {
                -v
            } else {
                v
            }
        };
        Ok((f(s + d) - f(s - d)) / (2.0 * d))
    }

    pub fn point(&self, s: f64) -> Result<ChartPoint> {
        self.check_s(s)?;
        let (rho, rho_prime) = self.factor_at(s);
        Ok(ChartPoint { s, r: self.r_unchecked(s), rho, rho_prime })
    }
}

pub const DEFAULT_CHART_RESOLUTION: usize = 4096;

struct NumericChart {
    profile: WarpProfile,
    r_nodes: Vec<f64>,
    s_nodes: Vec<f64>,
    h_nodes: Vec<f64>,
    /// `∫₀ʳ (1/h - 1/t) dt` at the nodes.
    log_cum: Vec<f64>,
}

impl NumericChart {
    fn integrand(&self, t: f64) -> f64 {
        log_integrand(&self.profile, t)
    }

    fn panel(nodes: &[f64], v: f64) -> usize {
        nodes.partition_point(|&x| x <= v).saturating_sub(1).min(nodes.len() - 2)
    }

    fn s_of_r(&self, r: f64) -> f64 {
        let k = Self::panel(&self.r_nodes, r);
        let f = |t: f64| self.integrand(t);
        r * (self.log_cum[k] + quad::gauss_panel(&f, self.r_nodes[k], r)).exp()
    }

    fn r_of_s(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let k = Self::panel(&self.s_nodes, s);
        let slope = |i: usize| if self.s_nodes[i] == 0.0 { 1.0 } else { self.h_nodes[i] / self.s_nodes[i] };
        let mut r = hermite(
            self.s_nodes[k],
            self.s_nodes[k + 1],
            self.r_nodes[k],
            self.r_nodes[k + 1],
            slope(k),
            slope(k + 1),
            s,
        );
        for _ in 0..2 {
            let sr = self.s_of_r(r);
            r -= (sr - s) * self.profile.h(r) / sr;
        }
        r
    }

    fn factor_at(&self, s: f64) -> (f64, f64) {
        let k0 = self.profile.k0();
        if s < SERIES_SWITCH {
            return (1.0 - 0.25 * k0 * s * s, -0.5 * k0 * s);
        }
        let [h, dh, _] = self.profile.derivatives(self.r_of_s(s));
        let rho = h / s;
        (rho, rho * (dh - 1.0) / s)
    }
}

fn log_integrand(profile: &WarpProfile, t: f64) -> f64 {
    if t < SERIES_SWITCH {
        profile.k0() * t / 6.0
    } else {
        1.0 / profile.h(t) - 1.0 / t
    }
}

/// Integrate the chart ODE as `s(r) = r exp(∫₀ʳ (1/h - 1/t) dt)` on a graded
/// grid of `resolution` panels and invert it by Hermite interpolation with
/// Newton polishing.
pub fn build_chart(profile: &WarpProfile, resolution: usize) -> Result<ConformalChart> {
    if resolution < 16 {
        return Err(Error::InvalidParameter(format!("chart resolution {resolution} is below 16")));
    }
    let [h0, dh0, _] = profile.derivatives(0.0);
    if h0.abs() > 1e-10 || (dh0 - 1.0).abs() > 1e-8 {
        return Err(Error::Normalization { rho0: dh0 });
    }
    let r_end = if profile.r_max().is_finite() {
        profile.r_max() * (1.0 - 1e-6)
    } else {
        1e3
    };
    // Nodes cluster toward the outer end, where s(r) may blow up.
    let r_nodes: Vec<f64> = (0..=resolution)
        .map(|k| {
            let u = 1.0 - k as f64 / resolution as f64;
            r_end * (1.0 - u * u)
        })
        .collect();
    let f = |t: f64| log_integrand(profile, t);
    let log_cum = quad::cumulative(&f, &r_nodes, 1e-14, 1e-12)?;
    let s_nodes: Vec<f64> = r_nodes.iter().zip(&log_cum).map(|(r, c)| r * c.exp()).collect();
    if s_nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Numeric("chart map is not increasing".into()));
    }
    let h_nodes = r_nodes.iter().map(|&r| profile.h(r)).collect();
    let s_max = *s_nodes.last().unwrap();
    let chart = NumericChart { profile: profile.clone(), r_nodes, s_nodes, h_nodes, log_cum };
    Ok(ConformalChart { kind: ChartKind::Numeric(Arc::new(chart)), s_max, r_max: r_end })
}
