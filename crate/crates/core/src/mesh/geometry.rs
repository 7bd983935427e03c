use std::f64::consts::PI;

use rayon::prelude::*;

use super::{vcross, vdot, vmid, vnorm, vscale, vsub, TriMesh, Vec3};
use crate::radial::ConformalChart;
use crate::util::pairwise_sum;

#[inline]
pub(crate) fn rho_at(chart: &ConformalChart, p: &Vec3) -> f64 {
    chart.factor_at(vnorm(p)).0
}

/// `rho(|x|)²` and its euclidean gradient `2 rho rho' x/|x|`.
#[inline]
fn rho_sq_with_gradient(chart: &ConformalChart, p: &Vec3) -> (f64, Vec3) {
    let s = vnorm(p);
    let (rho, rp) = chart.factor_at(s);
    if s == 0.0 {
        return (rho * rho, [0.0; 3]);
    }
    (rho * rho, vscale(p, 2.0 * rho * rp / s))
}

/// Mid-edge rule for `∫ rho² dA_δ` over one triangle.
pub(crate) fn triangle_area_g(chart: &ConformalChart, c: &[Vec3; 3]) -> f64 {
    let a = 0.5 * vnorm(&vcross(&vsub(&c[1], &c[0]), &vsub(&c[2], &c[0])));
    let q = rho_at(chart, &vmid(&c[0], &c[1])).powi(2)
        + rho_at(chart, &vmid(&c[1], &c[2])).powi(2)
        + rho_at(chart, &vmid(&c[2], &c[0])).powi(2);
    a * q / 3.0
}

/// Curved area `Σ_t A_t · mean of rho² at the edge midpoints`.
pub fn area_g(mesh: &TriMesh, chart: &ConformalChart) -> f64 {
    let parts: Vec<f64> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| triangle_area_g(chart, &mesh.corners(t)))
        .collect();
    pairwise_sum(&parts)
}

/// Per-triangle gradient of the mid-edge curved area with respect to its corners.
pub(crate) fn triangle_area_g_gradient(chart: &ConformalChart, c: &[Vec3; 3]) -> [Vec3; 3] {
    let cr = vcross(&vsub(&c[1], &c[0]), &vsub(&c[2], &c[0]));
    let two_a = vnorm(&cr);
    let n = vscale(&cr, 1.0 / two_a);
    let area = 0.5 * two_a;
    let mids = [vmid(&c[0], &c[1]), vmid(&c[1], &c[2]), vmid(&c[2], &c[0])];
    let (f0, g0) = rho_sq_with_gradient(chart, &mids[0]);
    let (f1, g1) = rho_sq_with_gradient(chart, &mids[1]);
    let (f2, g2) = rho_sq_with_gradient(chart, &mids[2]);
    let fbar = (f0 + f1 + f2) / 3.0;
    let gm = [g0, g1, g2];
    let mut out = [[0.0; 3]; 3];
    for k in 0..3 {
        let (b, cc) = (c[(k + 1) % 3], c[(k + 2) % 3]);
        // dA/da = ½ n × (c - b) for the cyclic order (a, b, c)
        let da = vscale(&vcross(&n, &vsub(&cc, &b)), 0.5);
        // corner k touches midpoints k (k, k+1) and k+2 (k+2, k)
        let gq = [
            (gm[k][0] + gm[(k + 2) % 3][0]) / 6.0,
            (gm[k][1] + gm[(k + 2) % 3][1]) / 6.0,
            (gm[k][2] + gm[(k + 2) % 3][2]) / 6.0,
        ];
        for i in 0..3 {
            out[k][i] = da[i] * fbar + area * gq[i];
        }
    }
    out
}

/// Gradient of [`area_g`] with respect to every vertex position.
pub fn area_gradient(mesh: &TriMesh, chart: &ConformalChart) -> Vec<Vec3> {
    let per_tri: Vec<[Vec3; 3]> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| triangle_area_g_gradient(chart, &mesh.corners(t)))
        .collect();
    let (offsets, items) = mesh.vertex_corners();
    (0..mesh.vertices().len())
        .into_par_iter()
        .map(|v| {
            let mut g = [0.0; 3];
            for &(t, c) in &items[offsets[v]..offsets[v + 1]] {
                for i in 0..3 {
                    g[i] += per_tri[t][c][i];
                }
            }
            g
        })
        .collect()
}

/// Curved boundary length `Σ |e| rho(midpoint)`.
pub fn boundary_length_g(mesh: &TriMesh, chart: &ConformalChart) -> f64 {
    let parts: Vec<f64> = mesh
        .boundary_edges()
        .iter()
        .map(|&(a, b)| {
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            vnorm(&vsub(&pb, &pa)) * rho_at(chart, &vmid(&pa, &pb))
        })
        .collect();
    pairwise_sum(&parts)
}

/// Outward unit conormal of each boundary edge `(a, b)`, in the plane of its triangle.
fn edge_conormals(mesh: &TriMesh) -> Vec<((usize, usize), Vec3)> {
    let mut out = Vec::new();
    for t in mesh.triangles() {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            if mesh.is_boundary(a) && mesh.boundary_neighbors(a).map(|(_, n)| n) == Some(b) {
                let (pa, pb, pc) = (mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]);
                let e = vsub(&pb, &pa);
                let e = vscale(&e, 1.0 / vnorm(&e));
                let w = vsub(&vmid(&pa, &pb), &pc);
                let eta = vsub(&w, &vscale(&e, vdot(&w, &e)));
                out.push(((a, b), vscale(&eta, 1.0 / vnorm(&eta))));
            }
        }
    }
    out
}

/// Largest angle (radians) between the discrete outward conormal at a
/// boundary vertex (mean of its two edge conormals) and the radial
/// direction.
pub fn orthogonality_defect(mesh: &TriMesh, _chart: &ConformalChart) -> f64 {
    let mut acc = vec![[0.0; 3]; mesh.vertices().len()];
    for ((a, b), eta) in edge_conormals(mesh) {
        for v in [a, b] {
            for i in 0..3 {
                acc[v][i] += eta[i];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (v, eta) in acc.iter().enumerate() {
        if !mesh.is_boundary(v) {
            continue;
        }
        let p = mesh.vertices()[v];
        worst = worst.max(vnorm(&vcross(eta, &p)).atan2(vdot(eta, &p)));
    }
    worst
}

/// Corner angles of every triangle from its curved edge lengths
/// `|e| rho(midpoint)` by the law of cosines.
fn curved_angles(mesh: &TriMesh, chart: &ConformalChart) -> Vec<[f64; 3]> {
    (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| {
            let c = mesh.corners(t);
            let len = |i: usize, j: usize| vnorm(&vsub(&c[j], &c[i])) * rho_at(chart, &vmid(&c[i], &c[j]));
            // side opposite corner k
            let l = [len(1, 2), len(2, 0), len(0, 1)];
            let mut ang = [0.0; 3];
            for k in 0..3 {
                let (a, b, o) = (l[(k + 1) % 3], l[(k + 2) % 3], l[k]);
                ang[k] = ((a * a + b * b - o * o) / (2.0 * a * b)).clamp(-1.0, 1.0).acos();
            }
            ang
        })
        .collect()
}

fn angle_sums(mesh: &TriMesh, chart: &ConformalChart) -> Vec<f64> {
    let ang = curved_angles(mesh, chart);
    let (offsets, items) = mesh.vertex_corners();
    (0..mesh.vertices().len())
        .map(|v| items[offsets[v]..offsets[v + 1]].iter().map(|&(t, c)| ang[t][c]).sum())
        .collect()
}

/// `|Σ interior angle defects + Σ boundary turning - 2πχ|`.
pub fn gauss_bonnet_defect(mesh: &TriMesh, chart: &ConformalChart) -> f64 {
    let sums = angle_sums(mesh, chart);
    let terms: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(v, s)| if mesh.is_boundary(v) { PI - s } else { 2.0 * PI - s })
        .collect();
    (pairwise_sum(&terms) - 2.0 * PI * mesh.euler_characteristic() as f64).abs()
}

/// Mean geodesic curvature of the boundary: total discrete turning
/// `Σ (π - angle sum)` over the curved boundary length.
pub fn boundary_geodesic_curvature(mesh: &TriMesh, chart: &ConformalChart) -> f64 {
    let sums = angle_sums(mesh, chart);
    let turning: Vec<f64> = (0..mesh.vertices().len()).filter(|&v| mesh.is_boundary(v)).map(|v| PI - sums[v]).collect();
    pairwise_sum(&turning) / boundary_length_g(mesh, chart)
}

/// Per-triangle `|∇^Σ r|² = 1 - ⟨n, x/|x|⟩²` at the centroid.
pub fn triangle_alignment(mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.triangles().len())
        .map(|t| {
            let c = mesh.corners(t);
            let n = vcross(&vsub(&c[1], &c[0]), &vsub(&c[2], &c[0]));
            let m = [
                (c[0][0] + c[1][0] + c[2][0]) / 3.0,
                (c[0][1] + c[1][1] + c[2][1]) / 3.0,
                (c[0][2] + c[1][2] + c[2][2]) / 3.0,
            ];
            let s = vnorm(&m);
            if s == 0.0 {
                return 1.0;
            }
            1.0 - (vdot(&n, &m) / (vnorm(&n) * s)).powi(2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, Shape};
    use crate::warp::{make_preset, Preset};
    use std::f64::consts::{FRAC_PI_3, TAU};

    fn chart(p: Preset) -> ConformalChart {
        ConformalChart::for_profile(&make_preset(p)).unwrap()
    }

    #[test]
    fn flat_disk_areas() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 58, 0, 0.0).unwrap();
        let a = area_g(&m, &chart(Preset::Euclidean));
        assert!((a - PI).abs() < 2e-3 * PI);
        let m = make_mesh(Shape::FlatDisk, 2.0, 58, 0, 0.0).unwrap();
        assert!((area_g(&m, &chart(Preset::Sphere)) - TAU).abs() < 5e-3 * TAU);
        assert!((boundary_length_g(&m, &chart(Preset::Sphere)) - TAU).abs() < 2e-3 * TAU);
        let g = chart(Preset::GaussianShrinker);
        assert!((area_g(&m, &g) - 7.943).abs() < 5e-3 * 7.943);
        let l = TAU * 2.0 * (-0.5f64).exp();
        assert!((boundary_length_g(&m, &g) - l).abs() < 2e-3 * l);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = make_mesh(Shape::PerturbedDisk, 1.5, 5, 1, 0.2).unwrap();
        let c = chart(Preset::GaussianShrinker);
        let g = area_gradient(&m, &c);
        for v in [0, 7, 33, m.vertices().len() - 1] {
            for i in 0..3 {
                let h = 1e-6;
                let mut plus = m.vertices().to_vec();
                let mut minus = m.vertices().to_vec();
                plus[v][i] += h;
                minus[v][i] -= h;
                let mp = TriMesh { vertices: plus, ..m.clone() };
                let mm = TriMesh { vertices: minus, ..m.clone() };
                let fd = (area_g(&mp, &c) - area_g(&mm, &c)) / (2.0 * h);
                assert!((fd - g[v][i]).abs() < 1e-7, "v {v} i {i}: {fd} vs {}", g[v][i]);
            }
        }
    }

    #[test]
    fn flat_disk_is_orthogonal_and_aligned() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 20, 0, 0.0).unwrap();
        assert!(orthogonality_defect(&m, &chart(Preset::Euclidean)) < 1e-12);
        assert!(triangle_alignment(&m).iter().all(|&a| (a - 1.0).abs() < 1e-12));
        let a = make_mesh(Shape::Annulus, 1.0, 20, 0, 0.0).unwrap();
        assert!(orthogonality_defect(&a, &chart(Preset::Euclidean)) > 5f64.to_radians());
    }

    #[test]
    fn gauss_bonnet_is_combinatorial() {
        for shape in Shape::ALL {
            let m = make_mesh(shape, 1.5, 12, 2, 0.1).unwrap();
            assert!(gauss_bonnet_defect(&m, &chart(Preset::Sphere)) < 1e-9, "{shape}");
        }
    }

    #[test]
    fn boundary_curvature_of_geodesic_disk() {
        let s = 2.0 * (0.5 * FRAC_PI_3).tan();
        let m = make_mesh(Shape::FlatDisk, s, 58, 0, 0.0).unwrap();
        let k = boundary_geodesic_curvature(&m, &chart(Preset::Sphere));
        let cot = 1.0 / FRAC_PI_3.tan();
        assert!((k - cot).abs() < 0.02 * cot, "{k}");
    }
}
