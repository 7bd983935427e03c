//! Triangulated surfaces in the conformal chart ball `|x| ≤ S` of `ℝ³`.
//!
//! Curved quantities are euclidean ones weighted by powers of `rho`; angles
//! are conformally invariant and measured euclidean.

mod build;
mod geometry;
mod minimize;
mod obj;

pub use build::{make_mesh, Shape};
pub use geometry::{
    area_g, area_gradient, boundary_geodesic_curvature, boundary_length_g, gauss_bonnet_defect, orthogonality_defect,
    triangle_alignment,
};
pub use minimize::{minimize, MinimizeOptions, SolveReport, StepRule, TraceRow};
pub use obj::{read_obj, write_obj};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Boundary vertices must lie this close to the sphere `|x| = S`.
pub const BOUNDARY_TOL: f64 = 1e-10;

pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Disk,
    Annulus,
}

impl Topology {
    pub fn euler_characteristic(self) -> i64 {
        match self {
            Topology::Disk => 1,
            Topology::Annulus => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Disk => "disk",
            Topology::Annulus => "annulus",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "disk" => Ok(Topology::Disk),
            "annulus" => Ok(Topology::Annulus),
            other => Err(Error::Parse(format!("unknown topology `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    big_s: f64,
    topology: Topology,
    /// Successor of each boundary vertex along its oriented boundary loop.
    next: Vec<usize>,
    prev: Vec<usize>,
}

#[inline]
pub(crate) fn vsub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn vdot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn vcross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn vnorm(a: &Vec3) -> f64 {
    vdot(a, a).sqrt()
}

#[inline]
pub(crate) fn vscale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn vmid(a: &Vec3, b: &Vec3) -> Vec3 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

impl TriMesh {
    /// Build and validate a mesh. Boundary flags come from edges with a
    /// single incident triangle.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, big_s: f64, topology: Topology) -> Result<Self> {
        if !(big_s > 0.0) {
            return Err(Error::InvalidParameter(format!("chart radius must be positive (got {big_s})")));
        }
        let nv = vertices.len();
        if triangles.iter().flatten().any(|&i| i >= nv) {
            return Err(Error::Mesh("triangle index out of range".into()));
        }
        let mut edge_count: BTreeMap<(usize, usize), (u32, (usize, usize))> = BTreeMap::new();
        for t in &triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Mesh(format!("triangle {t:?} repeats a vertex")));
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = edge_count.entry((a.min(b), a.max(b))).or_insert((0, (a, b)));
                e.0 += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, v)| v.0 > 2) {
            return Err(Error::Mesh(format!("edge {e:?} has more than two triangles")));
        }
        let mut boundary = vec![false; nv];
        let mut next = vec![usize::MAX; nv];
        let mut prev = vec![usize::MAX; nv];
        for (count, (a, b)) in edge_count.values() {
            if *count == 1 {
                if next[*a] != usize::MAX || prev[*b] != usize::MAX {
                    return Err(Error::Mesh("boundary is not a union of simple loops".into()));
                }
                boundary[*a] = true;
                boundary[*b] = true;
                next[*a] = *b;
                prev[*b] = *a;
            }
        }
        if (0..nv).any(|v| boundary[v] && (next[v] == usize::MAX || prev[v] == usize::MAX)) {
            return Err(Error::Mesh("boundary is not a union of simple loops".into()));
        }
        let mesh = TriMesh { vertices, triangles, boundary, big_s, topology, next, prev };
        let chi = mesh.euler_characteristic_with(edge_count.len());
        if chi != topology.euler_characteristic() {
            return Err(Error::Mesh(format!(
                "Euler characteristic {chi} does not match {topology} topology"
            )));
        }
        mesh.validate()?;
        Ok(mesh)
    }

    /// Geometric checks: boundary on the sphere, no degenerate triangles.
    pub fn validate(&self) -> Result<()> {
        for (v, p) in self.vertices.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Mesh(format!("vertex {v} is not finite")));
            }
            if self.boundary[v] && (vnorm(p) - self.big_s).abs() > BOUNDARY_TOL {
                return Err(Error::Mesh(format!(
                    "boundary vertex {v} is off the sphere by {:e}",
                    (vnorm(p) - self.big_s).abs()
                )));
            }
        }
        let min = self.min_triangle_area();
        if !(min >= MIN_TRIANGLE_AREA) {
            return Err(Error::Mesh(format!("degenerate triangle (area {min:e})")));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn chart_radius(&self) -> f64 {
        self.big_s
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Neighbors `(prev, next)` of a boundary vertex along its loop.
    pub fn boundary_neighbors(&self, v: usize) -> Option<(usize, usize)> {
        self.boundary[v].then(|| (self.prev[v], self.next[v]))
    }

    /// Oriented boundary edges `(a, b)`, following the triangle orientation.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        (0..self.vertices.len()).filter(|&v| self.boundary[v]).map(|v| (v, self.next[v])).collect()
    }

    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vertices.len()];
        let mut loops = Vec::new();
        for start in 0..self.vertices.len() {
            if !self.boundary[start] || seen[start] {
                continue;
            }
            let mut lp = Vec::new();
            let mut v = start;
            while !seen[v] {
                seen[v] = true;
                lp.push(v);
                v = self.next[v];
            }
            loops.push(lp);
        }
        loops
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    fn euler_characteristic_with(&self, edges: usize) -> i64 {
        self.vertices.len() as i64 - edges as i64 + self.triangles.len() as i64
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.euler_characteristic_with(self.edge_count())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * vnorm(&vcross(&vsub(&b, &a), &vsub(&c, &a)))
    }

    pub(crate) fn corners(&self, t: usize) -> [Vec3; 3] {
        let [i, j, k] = self.triangles[t];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn min_triangle_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                m = m.max(vnorm(&vsub(&self.vertices[t[k]], &self.vertices[t[(k + 1) % 3]])));
            }
        }
        m
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                sum += vnorm(&vsub(&self.vertices[t[k]], &self.vertices[t[(k + 1) % 3]]));
            }
        }
        sum / (3 * self.triangles.len()) as f64
    }

    /// Same connectivity with new vertex positions; boundary vertices are
    /// projected back to the sphere. No validation.
    pub(crate) fn with_vertices(&self, vertices: Vec<Vec3>) -> TriMesh {
        let mut m = self.clone();
        m.vertices = vertices;
        m.project_boundary();
        m
    }

    pub(crate) fn project_boundary(&mut self) {
        let s = self.big_s;
        for (v, p) in self.vertices.iter_mut().enumerate() {
            if self.boundary[v] {
                let l = vnorm(p);
                *p = vscale(p, s / l);
            }
        }
    }

    /// Boundary vertex closest to `point`.
    pub fn nearest_boundary_vertex(&self, point: &Vec3) -> Option<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.boundary[v])
            .min_by(|&a, &b| {
                let da = vnorm(&vsub(&self.vertices[a], point));
                let db = vnorm(&vsub(&self.vertices[b], point));
                da.total_cmp(&db).then(a.cmp(&b))
            })
    }

    /// Vertex → incident (triangle, corner) pairs, in triangle order.
    pub(crate) fn vertex_corners(&self) -> (Vec<usize>, Vec<(usize, usize)>) {
        let nv = self.vertices.len();
        let mut count = vec![0usize; nv + 1];
        for t in &self.triangles {
            for &v in t {
                count[v + 1] += 1;
            }
        }
        for v in 0..nv {
            count[v + 1] += count[v];
        }
        let mut fill = count.clone();
        let mut items = vec![(0, 0); count[nv]];
        for (ti, t) in self.triangles.iter().enumerate() {
            for (c, &v) in t.iter().enumerate() {
                items[fill[v]] = (ti, c);
                fill[v] += 1;
            }
        }
        (count, items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_topology_and_geometry() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let t = vec![[0, 1, 2]];
        // vertex 0 is on the boundary but not on the unit sphere
        assert!(matches!(TriMesh::new(v.clone(), t.clone(), 1.0, Topology::Disk), Err(Error::Mesh(_))));
        let v2 = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(TriMesh::new(v2.clone(), t.clone(), 1.0, Topology::Disk).is_ok());
        assert!(TriMesh::new(v2, t, 1.0, Topology::Annulus).is_err());
    }

    #[test]
    fn boundary_loops_follow_orientation() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 4, 0, 0.0).unwrap();
        let loops = m.boundary_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 24);
        let a = make_mesh(Shape::Annulus, 1.0, 6, 0, 0.0).unwrap();
        assert_eq!(a.boundary_loops().len(), 2);
        assert_eq!(a.euler_characteristic(), 0);
    }
}
