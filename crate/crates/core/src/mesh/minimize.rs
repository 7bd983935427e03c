use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::geometry::{area_g, area_gradient, boundary_length_g, orthogonality_defect, rho_at, triangle_area_g};
use super::{vcross, vdot, vmid, vnorm, vscale, vsub, Topology, TriMesh, Vec3, MIN_TRIANGLE_AREA};
use crate::error::{Error, Result};
use crate::radial::{ConformalChart, RadialGeometry};
use crate::util::pairwise_sum;

/// How the descent direction is built from the projected area gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `g_v / M_v` with `M_v` the lumped curved vertex area.
    Gradient,
    /// Gradient preconditioned by `L + M/S²` (weighted cotangent Laplacian
    /// plus mass), solved by Jacobi-preconditioned conjugate gradients.
    Sobolev,
}

impl StepRule {
    pub fn name(self) -> &'static str {
        match self {
            StepRule::Gradient => "gradient",
            StepRule::Sobolev => "sobolev",
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gradient" => Ok(StepRule::Gradient),
            "sobolev" => Ok(StepRule::Sobolev),
            other => Err(Error::InvalidParameter(format!("unknown step rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop once the gradient residual (discrete `L²` norm of the area
    /// gradient density) falls to this value.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub trace: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_iter: 200, grad_tol: 1e-3, step_rule: StepRule::Sobolev, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub area: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub area_g: f64,
    pub boundary_length_g: f64,
    pub bound: f64,
    pub gap: f64,
    pub orthogonality_defect: f64,
    pub gradient_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub topology: Topology,
    pub radius: f64,
    pub chart_radius: f64,
    pub trace: Vec<TraceRow>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const CG_REL_TOL: f64 = 1e-6;
const CG_MAX_ITER: usize = 300;
/// Largest single-step vertex displacement, in mean edge lengths.
const MAX_MOVE: f64 = 0.5;

/// Undirected edges with their opposite corners, plus a CSR adjacency.
struct Edges {
    pairs: Vec<(usize, usize)>,
    opposite: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    /// `(neighbor, edge index)` per vertex.
    adj: Vec<(usize, usize)>,
}

impl Edges {
    fn new(mesh: &TriMesh) -> Edges {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for t in mesh.triangles() {
            for k in 0..3 {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(t[k]);
            }
        }
        let nv = mesh.vertices().len();
        let (pairs, opposite): (Vec<_>, Vec<_>) = map.into_iter().unzip();
        let mut offsets = vec![0usize; nv + 1];
        for &(a, b) in &pairs {
            offsets[a + 1] += 1;
            offsets[b + 1] += 1;
        }
        for v in 0..nv {
            offsets[v + 1] += offsets[v];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![(0, 0); offsets[nv]];
        for (e, &(a, b)) in pairs.iter().enumerate() {
            adj[fill[a]] = (b, e);
            fill[a] += 1;
            adj[fill[b]] = (a, e);
            fill[b] += 1;
        }
        Edges { pairs, opposite, offsets, adj }
    }
}

/// Unit direction each vertex may move along: the vertex normal inside,
/// the sphere-tangent direction orthogonal to the boundary curve on it.
fn move_directions(mesh: &TriMesh) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; mesh.vertices().len()];
    for t in mesh.triangles() {
        let [a, b, c] = [mesh.vertices()[t[0]], mesh.vertices()[t[1]], mesh.vertices()[t[2]]];
        let n = vcross(&vsub(&b, &a), &vsub(&c, &a));
        for &v in t {
            for i in 0..3 {
                acc[v][i] += n[i];
            }
        }
    }
    acc.iter()
        .enumerate()
        .map(|(v, n)| {
            let d = match mesh.boundary_neighbors(v) {
                Some((p, q)) => {
                    let x = mesh.vertices()[v];
                    let tangent = vsub(&mesh.vertices()[q], &mesh.vertices()[p]);
                    vcross(&vscale(&x, 1.0 / vnorm(&x)), &tangent)
                }
                None => *n,
            };
            vscale(&d, 1.0 / vnorm(&d))
        })
        .collect()
}

/// Lumped curved vertex areas: a third of each incident triangle.
fn lumped_mass(mesh: &TriMesh, chart: &ConformalChart) -> Vec<f64> {
    let per_tri: Vec<f64> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| triangle_area_g(chart, &mesh.corners(t)) / 3.0)
        .collect();
    let mut m = vec![0.0; mesh.vertices().len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &v in tri {
            m[v] += per_tri[t];
        }
    }
    m
}

/// Cotangent weights scaled by `rho²` at the edge midpoint, clamped at 0.
fn cotan_weights(mesh: &TriMesh, chart: &ConformalChart, edges: &Edges) -> Vec<f64> {
    let p = mesh.vertices();
    edges
        .pairs
        .par_iter()
        .zip(&edges.opposite)
        .map(|(&(a, b), opp)| {
            let mut w = 0.0;
            for &c in opp {
                let u = vsub(&p[a], &p[c]);
                let v = vsub(&p[b], &p[c]);
                w += 0.5 * vdot(&u, &v) / vnorm(&vcross(&u, &v));
            }
            w.max(0.0) * rho_at(chart, &vmid(&p[a], &p[b])).powi(2)
        })
        .collect()
}

struct SobolevOperator<'a> {
    edges: &'a Edges,
    weights: Vec<f64>,
    coupling: Vec<f64>,
    mass: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> SobolevOperator<'a> {
    fn new(edges: &'a Edges, weights: Vec<f64>, dirs: &[Vec3], mass: &[f64], big_s: f64) -> Self {
        let coupling = edges.pairs.iter().map(|&(a, b)| vdot(&dirs[a], &dirs[b])).collect();
        let mass: Vec<f64> = mass.iter().map(|m| m / (big_s * big_s)).collect();
        let diag = (0..mass.len())
            .map(|v| {
                mass[v] + edges.adj[edges.offsets[v]..edges.offsets[v + 1]].iter().map(|&(_, e)| weights[e]).sum::<f64>()
            })
            .collect();
        SobolevOperator { edges, weights, coupling, mass, diag }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .into_par_iter()
            .map(|i| {
                let mut y = self.mass[i] * u[i];
                for &(j, e) in &self.edges.adj[self.edges.offsets[i]..self.edges.offsets[i + 1]] {
                    y += self.weights[e] * (u[i] - self.coupling[e] * u[j]);
                }
                y
            })
            .collect()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let target = CG_REL_TOL * dot(rhs, rhs).sqrt();
        for _ in 0..CG_MAX_ITER {
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            let ap = self.apply(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prod)
}

fn residual(g: &[f64], mass: &[f64]) -> f64 {
    let terms: Vec<f64> = g.iter().zip(mass).map(|(g, m)| g * g / m).collect();
    pairwise_sum(&terms).sqrt()
}

/// Projected gradient descent on the curved area.
///
/// Each vertex moves along a single direction (see [`StepRule`] for how
/// the step is formed): interior vertices along their area-weighted normal,
/// boundary vertices along the sphere tangent orthogonal to the boundary
/// curve, followed by re-projection to `|x| = S`. Tangential motion only
/// reparametrizes the surface and is projected out. A backtracking Armijo
/// search keeps the area sequence non-increasing.
pub fn minimize(
    mesh: &TriMesh,
    geom: &RadialGeometry,
    chart: &ConformalChart,
    opts: &MinimizeOptions,
) -> Result<(TriMesh, SolveReport)> {
    let big_s = mesh.chart_radius();
    if !(big_s < chart.s_max()) {
        return Err(Error::InvalidParameter(format!(
            "chart radius {big_s} is outside the chart (s_max = {})",
            chart.s_max()
        )));
    }
    mesh.validate()?;
    let radius = chart.r_of_s(big_s)?;
    let bound = 2.0 * PI * geom.integral_i(radius)?;

    let edges = Edges::new(mesh);
    let mut current = mesh.clone();
    let mut area = area_g(&current, chart);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut line_search_failed = false;
    let mut res;

    loop {
        let dirs = move_directions(&current);
        let grad = area_gradient(&current, chart);
        let g: Vec<f64> = grad.iter().zip(&dirs).map(|(g, d)| vdot(g, d)).collect();
        let mass = lumped_mass(&current, chart);
        res = residual(&g, &mass);
        if opts.trace {
            trace.push(TraceRow { iter: iterations, area, residual: res });
        }
        if res <= opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let step = match opts.step_rule {
            StepRule::Gradient => g.iter().zip(&mass).map(|(g, m)| g / m).collect::<Vec<f64>>(),
            StepRule::Sobolev => {
                let w = cotan_weights(&current, chart, &edges);
                SobolevOperator::new(&edges, w, &dirs, &mass, big_s).solve(&g)
            }
        };
        let slope = dot(&g, &step);
        let max_step = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(slope > 0.0) || max_step == 0.0 {
            line_search_failed = true;
            break;
        }
        let mut alpha = (MAX_MOVE * current.mean_edge_length() / max_step).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let moved: Vec<Vec3> = current
                .vertices()
                .par_iter()
                .zip(&dirs)
                .zip(&step)
                .map(|((p, d), u)| {
                    let m = vscale(d, -alpha * u);
                    [p[0] + m[0], p[1] + m[1], p[2] + m[2]]
                })
                .collect();
            let trial = current.with_vertices(moved);
            let a = area_g(&trial, chart);
            if a <= area - ARMIJO_C * alpha * slope && !flipped(&current, &trial) {
                accepted = Some((trial, a));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, a)) => {
                if trial.min_triangle_area() < MIN_TRIANGLE_AREA {
                    return Err(Error::Mesh(format!(
                        "mesh degenerated at iteration {} (min triangle area {:e})",
                        iterations + 1,
                        trial.min_triangle_area()
                    )));
                }
                current = trial;
                area = a;
                iterations += 1;
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }

    let report = SolveReport {
        area_g: area,
        boundary_length_g: boundary_length_g(&current, chart),
        bound,
        gap: area - bound,
        orthogonality_defect: orthogonality_defect(&current, chart),
        gradient_residual: res,
        iterations,
        converged,
        line_search_failed,
        topology: current.topology(),
        radius,
        chart_radius: big_s,
        trace,
    };
    Ok((current, report))
}

/// Whether any triangle normal turned by more than a right angle.
fn flipped(before: &TriMesh, after: &TriMesh) -> bool {
    (0..before.triangles().len()).into_par_iter().any(|t| {
        let n = |m: &TriMesh| {
            let c = m.corners(t);
            vcross(&vsub(&c[1], &c[0]), &vsub(&c[2], &c[0]))
        };
        vdot(&n(before), &n(after)) <= 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, Shape};
    use crate::warp::{make_preset, Preset};

    fn setup(p: Preset) -> (RadialGeometry, ConformalChart) {
        let prof = make_preset(p);
        let chart = ConformalChart::for_profile(&prof).unwrap();
        (RadialGeometry::new(prof), chart)
    }

    #[test]
    fn flat_disk_is_a_fixed_point() {
        for p in Preset::ALL {
            let (geom, chart) = setup(p);
            let m = make_mesh(Shape::FlatDisk, 1.0, 12, 0, 0.0).unwrap();
            let a0 = area_g(&m, &chart);
            let (out, rep) = minimize(&m, &geom, &chart, &MinimizeOptions::default()).unwrap();
            assert!(rep.iterations <= 5);
            assert!(rep.converged);
            assert!((rep.area_g - a0).abs() <= 1e-10 * a0);
            assert_eq!(out.vertices().len(), m.vertices().len());
        }
    }

    #[test]
    fn perturbed_disk_descends_monotonically() {
        let (geom, chart) = setup(Preset::Euclidean);
        let m = make_mesh(Shape::PerturbedDisk, 1.0, 16, 3, 0.05).unwrap();
        let a0 = area_g(&m, &chart);
        for rule in [StepRule::Sobolev, StepRule::Gradient] {
            let opts = MinimizeOptions { max_iter: 30, trace: true, step_rule: rule, ..Default::default() };
            let (out, rep) = minimize(&m, &geom, &chart, &opts).unwrap();
            assert!(rep.area_g < a0);
            assert!(rep.trace.windows(2).all(|w| w[1].area <= w[0].area));
            assert!(out.validate().is_ok());
        }
    }

    #[test]
    fn sobolev_solve_converges_to_flat_disk() {
        let (geom, chart) = setup(Preset::Euclidean);
        let m = make_mesh(Shape::PerturbedDisk, 1.0, 20, 1, 0.05).unwrap();
        let (_, rep) = minimize(&m, &geom, &chart, &MinimizeOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.gap.abs() < 0.01 * rep.bound);
        assert!(rep.orthogonality_defect < 2f64.to_radians());
    }
}
