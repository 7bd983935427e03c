//! End-to-end audit of the calibration argument on a discrete surface.
//!
//! With `B = B_eps(y)` the chart ball around the singular boundary point,
//! every flat triangle `T` satisfies, in the metric `g = rho² δ`,
//!
//! `∫_{T∖B} div_Σ W dA_g = ∮_{∂(T∖B)} rho² ⟨W, ν_T⟩ ds_δ + ∫_{T∖B} 2 rho rho'/s ⟨W, x^⊥⟩ dA_δ`,
//!
//! where the last term is `-⟨W, H⟩` for the (non-zero) mean curvature of a
//! flat plane in `g`. Summing over triangles splits the right side into
//! the flux through `∂Σ`, the flux through the ε-arc, and a curvature term
//! collecting the interior edge jumps `ν_T + ν_T'` and the plane terms. The
//! last one vanishes in the limit for minimal surfaces.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{rho_prime_over_s, CalibrationField, TangentPlaneSample};
use crate::mesh::{area_g, boundary_length_g, triangle_alignment, TriMesh, Vec3};
use crate::quad;
use crate::radial::{ConformalChart, RadialGeometry};
use crate::util::{dot, norm, pairwise_sum};
use crate::warp::Preset;

/// Relative tolerances of the audit checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditTolerances {
    /// Divergence-theorem residual and chain slack, relative to the area.
    pub divergence: f64,
    /// Boundary flux, relative to the area.
    pub boundary_flux: f64,
    /// Extrapolated singular flux against `2π I(R)`, relative.
    pub singular: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        AuditTolerances { divergence: 0.01, boundary_flux: 0.01, singular: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub area_g: f64,
    /// Curved area of `Σ ∖ B_eps(y)`.
    pub area_outside: f64,
    pub div_integral: f64,
    pub boundary_flux: f64,
    pub singular_flux: f64,
    /// Limit `ε → 0` of the arc flux, extrapolated quadratically from the
    /// radii `ε, 2ε, 3ε`.
    pub singular_limit: f64,
    /// Total angle of the discrete ε-arc.
    pub arc_angle: f64,
    /// Interior edge jumps plus plane terms (`-∫ ⟨W, H⟩`).
    pub curvature_term: f64,
    pub bound: f64,
    pub eps: f64,
    pub y_vertex: usize,
    /// Largest `div_Σ W` at a quadrature point.
    pub max_div: f64,
    /// `area_g - div_integral`.
    pub slack_area: f64,
    /// `div_integral - boundary_flux - singular_flux`.
    pub slack_flux: f64,
    /// `|slack_flux| / area_g`.
    pub divergence_residual: f64,
    /// `|div_integral - boundary_flux - singular_flux - curvature_term| / area_g`;
    /// pure quadrature error.
    pub quadrature_residual: f64,
}

/// One line of the audit summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
}

impl AuditRecord {
    pub fn checks(&self, tol: &AuditTolerances) -> Vec<Check> {
        let a = self.area_g;
        let check = |name, value: f64, limit: f64| Check { name, pass: value <= limit, value, limit };
        vec![
            check("div-below-area", self.div_integral - self.area_g, tol.divergence * a),
            check("flux-below-div", -self.slack_flux, tol.divergence * a),
            check("divergence-theorem", self.slack_flux.abs(), tol.divergence * a),
            check("boundary-flux", self.boundary_flux.abs(), tol.boundary_flux * a),
            check("singular-flux", (self.singular_limit - self.bound).abs(), tol.singular * self.bound),
            check("max-div", self.max_div, 1.0 + 1e-9),
        ]
    }

    pub fn passes(&self, tol: &AuditTolerances) -> bool {
        self.checks(tol).iter().all(|c| c.pass)
    }
}

/// Subdivision depth for triangles that touch or approach the ε-ball.
const MAX_DEPTH: u32 = 7;

/// Degree-4 symmetric rule on the triangle: (barycentric weight, a, b).
const RULE: [(f64, f64); 2] = [(0.223381589678011, 0.445948490915965), (0.109951743655322, 0.091576213509771)];

#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    area: f64,
    div: f64,
    plane: f64,
    boundary: f64,
    interior_edges: f64,
    arc: f64,
    arc_angle: f64,
    max_div: f64,
}

struct Context<'a> {
    field: &'a CalibrationField,
    chart: &'a ConformalChart,
    y: Vec3,
    eps: f64,
}

/// Audit of the divergence chain for `field` on `mesh`, excising the chart
/// ball of radius `eps` around `y`, which must be a boundary vertex.
pub fn calibration_audit(mesh: &TriMesh, field: &CalibrationField, eps: f64) -> Result<AuditRecord> {
    if field.dim() != 3 {
        return Err(Error::InvalidParameter("the audit needs a field on a 3-dimensional chart".into()));
    }
    if (mesh.chart_radius() - field.chart_radius()).abs() > 1e-9 * field.chart_radius() {
        return Err(Error::InvalidParameter(format!(
            "mesh chart radius {} differs from the field's s(R) = {}",
            mesh.chart_radius(),
            field.chart_radius()
        )));
    }
    let y: Vec3 = [field.y()[0], field.y()[1], field.y()[2]];
    let yv = mesh
        .nearest_boundary_vertex(&y)
        .filter(|&v| norm(&sub3(&mesh.vertices()[v], &y)) <= 1e-9 * mesh.chart_radius())
        .ok_or_else(|| Error::InvalidParameter("singular point is not a boundary vertex of the mesh".into()))?;
    let local = local_edge_length(mesh, yv);
    if !(eps >= 5.0 * local) || !(eps < mesh.chart_radius() / 6.0) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} must lie in [5 h, S/6) with local edge length h = {local}"
        )));
    }
    let ctx = Context { field, chart: field.chart(), y, eps };
    let parts: Vec<Parts> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| triangle_parts(&ctx, mesh, t))
        .collect::<Result<_>>()?;
    let sum = |f: fn(&Parts) -> f64| pairwise_sum(&parts.iter().map(f).collect::<Vec<_>>());
    let area = area_g(mesh, field.chart());
    let div_integral = sum(|p| p.div);
    let boundary_flux = sum(|p| p.boundary);
    let singular_flux = sum(|p| p.arc);
    let arc_angle = sum(|p| p.arc_angle);
    let curvature_term = sum(|p| p.interior_edges) + sum(|p| p.plane);
    let slack_flux = div_integral - boundary_flux - singular_flux;
    let wider = |k: f64| -> Result<f64> {
        let ctx = Context { field, chart: field.chart(), y, eps: k * eps };
        let arcs: Vec<f64> = (0..mesh.triangles().len())
            .into_par_iter()
            .map(|t| Ok(arc_flux(&ctx, &triangle_frame(&mesh.corners(t)), &mesh.corners(t))?.0))
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&arcs))
    };
    let singular_limit = 3.0 * singular_flux - 3.0 * wider(2.0)? + wider(3.0)?;
    Ok(AuditRecord {
        area_g: area,
        area_outside: sum(|p| p.area),
        div_integral,
        boundary_flux,
        singular_flux,
        singular_limit,
        arc_angle,
        curvature_term,
        bound: field.disk_area(),
        eps,
        y_vertex: yv,
        max_div: parts.iter().map(|p| p.max_div).fold(f64::NEG_INFINITY, f64::max),
        slack_area: area - div_integral,
        slack_flux,
        divergence_residual: slack_flux.abs() / area,
        quadrature_residual: (slack_flux - curvature_term).abs() / area,
    })
}

/// Longest edge at vertex `v`; the audit needs `eps ≥ 5` of these.
pub fn local_edge_length(mesh: &TriMesh, v: usize) -> f64 {
    let mut h: f64 = 0.0;
    for t in mesh.triangles().iter().filter(|t| t.contains(&v)) {
        for &w in t {
            h = h.max(norm(&sub3(&mesh.vertices()[w], &mesh.vertices()[v])));
        }
    }
    h
}

fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: &Vec3, b: &Vec3, t: f64) -> Vec3 {
    [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: &Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn triangle_parts(ctx: &Context, mesh: &TriMesh, t: usize) -> Result<Parts> {
    let tri = mesh.triangles()[t];
    let c = mesh.corners(t);
    let frame = triangle_frame(&c);
    let mut parts = Parts { max_div: f64::NEG_INFINITY, ..Parts::default() };
    region(ctx, &frame, &c, 0, &mut parts)?;
    for k in 0..3 {
        let (ia, ib) = (tri[k], tri[(k + 1) % 3]);
        let (a, b) = (c[k], c[(k + 1) % 3]);
        let opp = c[(k + 2) % 3];
        // in-plane outward conormal of this edge
        let e = unit(&sub3(&b, &a));
        let w = sub3(&add_scaled(&a, &sub3(&b, &a), 0.5), &opp);
        let nu = unit(&add_scaled(&w, &e, -dot(&w, &e)));
        let flux = edge_flux(ctx, &a, &b, &nu)?;
        if mesh.boundary_neighbors(ia).map(|(_, next)| next) == Some(ib) {
            parts.boundary += flux;
        } else {
            parts.interior_edges += flux;
        }
    }
    let (arc, angle) = arc_flux(ctx, &frame, &c)?;
    parts.arc = arc;
    parts.arc_angle = angle;
    Ok(parts)
}

fn triangle_frame(c: &[Vec3; 3]) -> Frame {
    let n = unit(&cross(&sub3(&c[1], &c[0]), &sub3(&c[2], &c[0])));
    let e1 = unit(&sub3(&c[1], &c[0]));
    let e2 = cross(&n, &e1);
    Frame { n, e1, e2 }
}

struct Frame {
    n: Vec3,
    e1: Vec3,
    e2: Vec3,
}

fn dist_to_y(ctx: &Context, p: &Vec3) -> f64 {
    norm(&sub3(p, &ctx.y))
}

fn region(ctx: &Context, frame: &Frame, c: &[Vec3; 3], depth: u32, acc: &mut Parts) -> Result<()> {
    if c.iter().all(|p| dist_to_y(ctx, p) <= ctx.eps) {
        return Ok(());
    }
    let d = point_triangle_distance(&ctx.y, c);
    let diam = (0..3).map(|k| norm(&sub3(&c[k], &c[(k + 1) % 3]))).fold(0.0, f64::max);
    let fine = if d >= ctx.eps { diam <= 0.5 * (d - ctx.eps).max(0.0) + 0.25 * d } else { false };
    if depth < MAX_DEPTH && !fine {
        let m = [mid(&c[0], &c[1]), mid(&c[1], &c[2]), mid(&c[2], &c[0])];
        for sub in [[c[0], m[0], m[2]], [m[0], c[1], m[1]], [m[2], m[1], c[2]], [m[0], m[1], m[2]]] {
            region(ctx, frame, &sub, depth + 1, acc)?;
        }
        return Ok(());
    }
    let area = 0.5 * norm(&cross(&sub3(&c[1], &c[0]), &sub3(&c[2], &c[0])));
    for (w, a) in RULE {
        let b = 1.0 - 2.0 * a;
        for bary in [[a, a, b], [a, b, a], [b, a, a]] {
            let x: Vec3 = std::array::from_fn(|i| bary[0] * c[0][i] + bary[1] * c[1][i] + bary[2] * c[2][i]);
            if dist_to_y(ctx, &x) < ctx.eps {
                continue;
            }
            let s = norm(&x);
            let rho = ctx.chart.factor_at(s).0;
            let weight = w * area * rho * rho;
            let sample = TangentPlaneSample::new(x.to_vec(), frame.e1.to_vec(), frame.e2.to_vec())?;
            let div = ctx.field.div_exact(&sample)?;
            let value = ctx.field.value(&x)?;
            let w_perp = dot(&value, &frame.n) * dot(&x, &frame.n);
            let plane = if s == 0.0 { 0.0 } else { 2.0 * rho_prime_over_s(ctx.chart, s) / rho * w_perp };
            acc.area += weight;
            acc.div += weight * div;
            acc.plane += weight * plane;
            acc.max_div = acc.max_div.max(div);
        }
    }
    Ok(())
}

fn mid(a: &Vec3, b: &Vec3) -> Vec3 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// `∫ rho² ⟨W, ν⟩ ds_δ` over the part of segment `[a, b]` outside the ε-ball.
fn edge_flux(ctx: &Context, a: &Vec3, b: &Vec3, nu: &Vec3) -> Result<f64> {
    let d = sub3(b, a);
    let len = norm(&d);
    let f = |t: f64| -> f64 {
        let x = add_scaled(a, &d, t);
        let rho = ctx.chart.factor_at(norm(&x)).0;
        match ctx.field.value(&x) {
            Ok(w) => rho * rho * dot(&w, nu) * len,
            Err(_) => f64::NAN,
        }
    };
    let mut total = 0.0;
    for (t0, t1) in outside_intervals(a, &d, &ctx.y, ctx.eps) {
        let v = quad::integrate(f, t0, t1, 1e-13, 1e-10)?;
        if !v.is_finite() {
            return Err(Error::Numeric("field evaluation failed on an edge".into()));
        }
        total += v;
    }
    Ok(total)
}

/// Parameter intervals of `a + t d`, `t ∈ [0, 1]`, with `|x - y| ≥ eps`.
fn outside_intervals(a: &Vec3, d: &Vec3, y: &Vec3, eps: f64) -> Vec<(f64, f64)> {
    let ay = sub3(a, y);
    let qa = dot(d, d);
    let qb = 2.0 * dot(&ay, d);
    let qc = dot(&ay, &ay) - eps * eps;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return vec![(0.0, 1.0)];
    }
    let sq = disc.sqrt();
    let (t0, t1) = ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa));
    let mut out = Vec::new();
    if t0 > 0.0 {
        out.push((0.0, t0.min(1.0)));
    }
    if t1 < 1.0 {
        out.push((t1.max(0.0), 1.0));
    }
    out
}

/// Flux `∫ rho² ⟨W, ν⟩ ds_δ` through the part of the ε-circle inside the
/// triangle, with `ν` pointing into the ball, and the arc's angle.
fn arc_flux(ctx: &Context, frame: &Frame, c: &[Vec3; 3]) -> Result<(f64, f64)> {
    let off = dot(&sub3(&ctx.y, &c[0]), &frame.n);
    if off.abs() >= ctx.eps {
        return Ok((0.0, 0.0));
    }
    let center = add_scaled(&ctx.y, &frame.n, -off);
    let radius = (ctx.eps * ctx.eps - off * off).sqrt();
    let at = |th: f64| -> Vec3 {
        let (s, co) = th.sin_cos();
        std::array::from_fn(|i| center[i] + radius * (co * frame.e1[i] + s * frame.e2[i]))
    };
    let mut cuts = Vec::new();
    for k in 0..3 {
        let (a, b) = (c[k], c[(k + 1) % 3]);
        let d = sub3(&b, &a);
        for t in segment_circle(&a, &d, &center, radius) {
            let p = add_scaled(&a, &d, t);
            let q = sub3(&p, &center);
            cuts.push(dot(&q, &frame.e2).atan2(dot(&q, &frame.e1)));
        }
    }
    let inside = |th: f64| point_in_triangle(&at(th), c, &frame.n);
    let mut arcs = Vec::new();
    if cuts.is_empty() {
        if inside(0.0) {
            arcs.push((0.0, TAU));
        }
    } else {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        for i in 0..cuts.len() {
            let t0 = cuts[i];
            let t1 = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + TAU };
            if t1 - t0 > 1e-14 && inside(0.5 * (t0 + t1)) {
                arcs.push((t0, t1));
            }
        }
    }
    let f = |th: f64| -> f64 {
        let x = at(th);
        let q = sub3(&x, &center);
        let nu = [-q[0] / radius, -q[1] / radius, -q[2] / radius];
        let rho = ctx.chart.factor_at(norm(&x)).0;
        match ctx.field.value(&x) {
            Ok(w) => rho * rho * dot(&w, &nu) * radius,
            Err(_) => f64::NAN,
        }
    };
    let mut flux = 0.0;
    let mut angle = 0.0;
    for (t0, t1) in arcs {
        let v = quad::integrate(f, t0, t1, 1e-13, 1e-10)?;
        if !v.is_finite() {
            return Err(Error::Numeric("field evaluation failed on the ε-arc".into()));
        }
        flux += v;
        angle += t1 - t0;
    }
    Ok((flux, angle))
}

/// Parameters `t ∈ [0, 1]` where `a + t d` meets the circle (coplanar).
fn segment_circle(a: &Vec3, d: &Vec3, center: &Vec3, radius: f64) -> Vec<f64> {
    let ac = sub3(a, center);
    let qa = dot(d, d);
    let qb = 2.0 * dot(&ac, d);
    let qc = dot(&ac, &ac) - radius * radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)].into_iter().filter(|t| (0.0..=1.0).contains(t)).collect()
}

fn point_in_triangle(p: &Vec3, c: &[Vec3; 3], n: &Vec3) -> bool {
    (0..3).all(|k| {
        let e = sub3(&c[(k + 1) % 3], &c[k]);
        dot(&cross(&e, &sub3(p, &c[k])), n) >= 0.0
    })
}

/// Euclidean distance from `p` to the triangle `c`.
fn point_triangle_distance(p: &Vec3, c: &[Vec3; 3]) -> f64 {
    let (a, b, cc) = (c[0], c[1], c[2]);
    let ab = sub3(&b, &a);
    let ac = sub3(&cc, &a);
    let ap = sub3(p, &a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return norm(&ap);
    }
    let bp = sub3(p, &b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return norm(&bp);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return norm(&sub3(p, &add_scaled(&a, &ab, v)));
    }
    let cp = sub3(p, &cc);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return norm(&cp);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return norm(&sub3(p, &add_scaled(&a, &ac, w)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm(&sub3(p, &add_scaled(&b, &sub3(&cc, &b), w)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q: Vec3 = std::array::from_fn(|i| a[i] + ab[i] * v + ac[i] * w);
    norm(&sub3(p, &q))
}

/// Curved area against `2π I(R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaBoundReport {
    pub area: f64,
    pub bound: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub pass: bool,
}

/// Pass iff `area_g ≥ 2π I(R) (1 - tol)`.
pub fn area_bound_report(
    mesh: &TriMesh,
    geom: &RadialGeometry,
    chart: &ConformalChart,
    big_r: f64,
    tol: f64,
) -> Result<AreaBoundReport> {
    let bound = 2.0 * PI * geom.integral_i(big_r)?;
    let area = area_g(mesh, chart);
    let gap = area - bound;
    Ok(AreaBoundReport { area, bound, gap, relative_gap: gap / bound, pass: gap >= -tol * bound })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoperimetricReport {
    pub area: f64,
    pub boundary_length: f64,
    /// `tan(R/2) |∂Σ|`.
    pub rhs: f64,
    pub slack: f64,
    pub relative_slack: f64,
    pub pass: bool,
}

/// `|Σ| ≥ tan(R/2) |∂Σ|` on the round sphere; pass iff the slack is at
/// least `-tol · area_g`.
pub fn isoperimetric_check(
    mesh: &TriMesh,
    geom: &RadialGeometry,
    chart: &ConformalChart,
    big_r: f64,
    tol: f64,
) -> Result<IsoperimetricReport> {
    if !geom.profile().is_preset(Preset::Sphere) {
        return Err(Error::InvalidParameter("the isoperimetric check applies to the sphere preset only".into()));
    }
    if !(big_r > 0.0 && big_r <= std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(Error::domain("R (hemisphere)", big_r, 0.0, std::f64::consts::FRAC_PI_2));
    }
    let area = area_g(mesh, chart);
    let boundary_length = boundary_length_g(mesh, chart);
    let rhs = (0.5 * big_r).tan() * boundary_length;
    let slack = area - rhs;
    Ok(IsoperimetricReport {
        area,
        boundary_length,
        rhs,
        slack,
        relative_slack: slack / area,
        pass: slack >= -tol * area,
    })
}

/// Fraction of triangles with `|∇^Σ r|² ≥ 0.99`.
pub fn equality_alignment(mesh: &TriMesh) -> f64 {
    let a = triangle_alignment(mesh);
    a.iter().filter(|&&v| v >= 0.99).count() as f64 / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, minimize, MinimizeOptions, Shape};
    use crate::warp::make_preset;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn setup(p: Preset) -> (RadialGeometry, ConformalChart) {
        let prof = make_preset(p);
        let chart = ConformalChart::for_profile(&prof).unwrap();
        (RadialGeometry::new(prof), chart)
    }

    fn field_for(mesh: &TriMesh, p: Preset, big_r: f64) -> CalibrationField {
        let (g, c) = setup(p);
        let s = mesh.chart_radius();
        let v = mesh.nearest_boundary_vertex(&[s, 0.0, 0.0]).unwrap();
        CalibrationField::conformal(g, c, big_r, mesh.vertices()[v].to_vec()).unwrap()
    }

    fn eps_for(m: &TriMesh, f: &CalibrationField) -> f64 {
        let v = m.nearest_boundary_vertex(&[f.y()[0], f.y()[1], f.y()[2]]).unwrap();
        5.5 * local_edge_length(m, v)
    }

    #[test]
    fn euclidean_flat_disk_chain() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 58, 0, 0.0).unwrap();
        let f = field_for(&m, Preset::Euclidean, 1.0);
        let rec = calibration_audit(&m, &f, eps_for(&m, &f)).unwrap();
        assert!(rec.quadrature_residual < 1e-6, "{rec:?}");
        assert!(rec.curvature_term.abs() < 1e-9);
        assert!(rec.max_div <= 1.0 + 1e-9);
        assert!(rec.boundary_flux.abs() < 1e-3);
        assert!(rec.passes(&AuditTolerances::default()), "{:?}", rec.checks(&AuditTolerances::default()));
    }

    #[test]
    fn sphere_singular_flux_approaches_disk_area() {
        let m = make_mesh(Shape::FlatDisk, 2.0, 58, 0, 0.0).unwrap();
        let f = field_for(&m, Preset::Sphere, FRAC_PI_2);
        let rec = calibration_audit(&m, &f, eps_for(&m, &f)).unwrap();
        assert!((rec.singular_limit - TAU).abs() < 0.02 * TAU, "{rec:?}");
        assert!(rec.quadrature_residual < 1e-6);
    }

    #[test]
    fn y_must_be_a_boundary_vertex() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 12, 0, 0.0).unwrap();
        let (g, c) = setup(Preset::Euclidean);
        let y = vec![(0.01f64).cos(), (0.01f64).sin(), 0.0];
        let f = CalibrationField::conformal(g, c, 1.0, y).unwrap();
        assert!(calibration_audit(&m, &f, 0.5).is_err());
    }

    #[test]
    fn perturbed_mesh_identity_holds() {
        let (_, c) = setup(Preset::GaussianShrinker);
        let s = c.s_of_r(0.9).unwrap();
        let m = make_mesh(Shape::PerturbedDisk, s, 58, 2, 0.05 * s).unwrap();
        let f = field_for(&m, Preset::GaussianShrinker, 0.9);
        let rec = calibration_audit(&m, &f, eps_for(&m, &f)).unwrap();
        assert!(rec.quadrature_residual < 1e-6, "{rec:?}");
    }

    #[test]
    fn isoperimetric_equality_on_geodesic_disks() {
        let (g, c) = setup(Preset::Sphere);
        for r in [FRAC_PI_3, FRAC_PI_2] {
            let s = c.s_of_r(r).unwrap();
            let m = make_mesh(Shape::FlatDisk, s, 40, 0, 0.0).unwrap();
            let rep = isoperimetric_check(&m, &g, &c, r, 1e-3).unwrap();
            assert!(rep.relative_slack.abs() < 5e-3, "{rep:?}");
        }
        let (ge, ce) = setup(Preset::Euclidean);
        let m = make_mesh(Shape::FlatDisk, 1.0, 8, 0, 0.0).unwrap();
        assert!(isoperimetric_check(&m, &ge, &ce, 1.0, 1e-3).is_err());
    }

    #[test]
    fn alignment_flags_tilted_disk() {
        let flat = make_mesh(Shape::FlatDisk, 1.0, 12, 0, 0.0).unwrap();
        assert_eq!(equality_alignment(&flat), 1.0);
        let tilted = make_mesh(Shape::TiltedDisk, 1.0, 12, 0, 0.2).unwrap();
        assert!(equality_alignment(&tilted) < 1.0);
    }

    #[test]
    fn converged_solve_passes_area_bound() {
        let (g, c) = setup(Preset::Sphere);
        let s = c.s_of_r(FRAC_PI_3).unwrap();
        let m = make_mesh(Shape::PerturbedDisk, s, 20, 5, 0.05 * s).unwrap();
        let (out, _) = minimize(&m, &g, &c, &MinimizeOptions::default()).unwrap();
        let rep = area_bound_report(&out, &g, &c, FRAC_PI_3, 0.01).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
