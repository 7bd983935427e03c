use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{vnorm, Topology, TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::util::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Planar disk of radius `S` through the origin.
    FlatDisk,
    /// Flat disk twisted about the `x` diameter: the point `(x, y, 0)` is
    /// rotated about the `x` axis by `π/6 + amplitude·π·x/S`. Norms are
    /// preserved, so the boundary stays on the sphere, and the disk still
    /// contains the diameter.
    TiltedDisk,
    /// Flat disk displaced along `z` by a smooth random field that is odd
    /// under `p ↦ -p`, scaled to maximum `amplitude`, boundary re-projected.
    PerturbedDisk,
    /// Catenoidal band `r = a cosh(z/a)`, `a = S/2`, cut by the sphere.
    Annulus,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::FlatDisk, Shape::TiltedDisk, Shape::PerturbedDisk, Shape::Annulus];

    pub fn name(self) -> &'static str {
        match self {
            Shape::FlatDisk => "flat-disk",
            Shape::TiltedDisk => "tilted-disk",
            Shape::PerturbedDisk => "perturbed-disk",
            Shape::Annulus => "annulus",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown shape `{s}`")))
    }
}

/// Build a mesh. For disks `resolution` is the number of rings `m` (ring
/// `k` carries `6k` vertices, `6m²` triangles in total); for the annulus it
/// is the number of rows, with `6m` vertices per row.
pub fn make_mesh(shape: Shape, big_s: f64, resolution: usize, seed: u64, amplitude: f64) -> Result<TriMesh> {
    if resolution < 3 {
        return Err(Error::InvalidParameter(format!("resolution must be at least 3 (got {resolution})")));
    }
    if !(big_s > 0.0 && big_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("chart radius must be positive (got {big_s})")));
    }
    if !amplitude.is_finite() {
        return Err(Error::InvalidParameter("amplitude must be finite".into()));
    }
    match shape {
        Shape::FlatDisk => {
            let (v, t) = ring_disk(big_s, resolution);
            TriMesh::new(v, t, big_s, Topology::Disk)
        }
        Shape::TiltedDisk => {
            let (mut v, t) = ring_disk(big_s, resolution);
            for p in &mut v {
                let th = PI / 6.0 + amplitude * PI * p[0] / big_s;
                let (sn, cs) = th.sin_cos();
                *p = [p[0], p[1] * cs, p[1] * sn];
            }
            TriMesh::new(v, t, big_s, Topology::Disk)
        }
        Shape::PerturbedDisk => {
            if amplitude.abs() >= 0.5 * big_s {
                return Err(Error::InvalidParameter(format!(
                    "perturbation amplitude {amplitude} must be below S/2"
                )));
            }
            let (mut v, t) = ring_disk(big_s, resolution);
            let field = OddNoise::new(seed, big_s);
            let raw: Vec<f64> = v.iter().map(|p| field.eval(p[0], p[1])).collect();
            let max = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (p, z) in v.iter_mut().zip(&raw) {
                p[2] = amplitude * z / max;
            }
            let mut m = TriMesh::new_unchecked(v, t, big_s, Topology::Disk)?;
            m.project_boundary();
            m.validate()?;
            Ok(m)
        }
        Shape::Annulus => {
            let (v, t) = catenoid_band(big_s, resolution)?;
            TriMesh::new(v, t, big_s, Topology::Annulus)
        }
    }
}

impl TriMesh {
    fn new_unchecked(v: Vec<Vec3>, t: Vec<[usize; 3]>, big_s: f64, topology: Topology) -> Result<TriMesh> {
        // boundary vertices are still in the plane; build from a flat copy
        let flat: Vec<Vec3> = v.iter().map(|p| [p[0], p[1], 0.0]).collect();
        let mut m = TriMesh::new(flat, t, big_s, topology)?;
        m.vertices = v;
        Ok(m)
    }
}

fn ring_disk(big_s: f64, m: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v = vec![[0.0, 0.0, 0.0]];
    let mut t = Vec::with_capacity(6 * m * m);
    let mut inner_start = 0;
    let mut inner_n = 1;
    for k in 1..=m {
        let n = 6 * k;
        let start = v.len();
        let rad = big_s * k as f64 / m as f64;
        for j in 0..n {
            let a = TAU * j as f64 / n as f64;
            let (sn, cs) = a.sin_cos();
            let p = if k == m { [big_s * cs, big_s * sn, 0.0] } else { [rad * cs, rad * sn, 0.0] };
            v.push(p);
        }
        if inner_n == 1 {
            for j in 0..n {
                t.push([0, start + j, start + (j + 1) % n]);
            }
        } else {
            // merge the two rings by angle
            let (mut i, mut j) = (0, 0);
            while i < inner_n || j < n {
                let next_outer = (j + 1) as f64 / n as f64;
                let next_inner = (i + 1) as f64 / inner_n as f64;
                if j < n && (i == inner_n || next_outer <= next_inner) {
                    t.push([inner_start + i % inner_n, start + j, start + (j + 1) % n]);
                    j += 1;
                } else {
                    t.push([inner_start + i, start + j % n, inner_start + (i + 1) % inner_n]);
                    i += 1;
                }
            }
        }
        inner_start = start;
        inner_n = n;
    }
    (v, t)
}

fn catenoid_band(big_s: f64, rows: usize) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let a = 0.5 * big_s;
    let radius = |z: f64| a * (z / a).cosh();
    let zb = bisect(|z| radius(z).powi(2) + z * z - big_s * big_s, 0.0, big_s, 1e-15)?;
    let n = 6 * rows;
    let mut v = Vec::with_capacity(n * (rows + 1));
    for i in 0..=rows {
        let z = -zb + 2.0 * zb * i as f64 / rows as f64;
        let rz = radius(z);
        // alternate rows are offset by half a step for better triangles
        let off = if i % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..n {
            let th = TAU * (j as f64 + off) / n as f64;
            let mut p = [rz * th.cos(), rz * th.sin(), z];
            if i == 0 || i == rows {
                let l = vnorm(&p);
                p = [p[0] * big_s / l, p[1] * big_s / l, p[2] * big_s / l];
            }
            v.push(p);
        }
    }
    let mut t = Vec::with_capacity(2 * n * rows);
    for i in 0..rows {
        let (r0, r1) = (i * n, (i + 1) * n);
        for j in 0..n {
            let j1 = (j + 1) % n;
            if i % 2 == 0 {
                t.push([r0 + j, r0 + j1, r1 + j]);
                t.push([r0 + j1, r1 + j1, r1 + j]);
            } else {
                t.push([r0 + j, r1 + j1, r1 + j]);
                t.push([r0 + j, r0 + j1, r1 + j1]);
            }
        }
    }
    Ok((v, t))
}

/// `Σ c_j sin(k_j · p / S)`, odd in `p`.
struct OddNoise {
    modes: Vec<([f64; 2], f64)>,
    big_s: f64,
}

impl OddNoise {
    fn new(seed: u64, big_s: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..8)
            .map(|_| {
                let ang = TAU * rng.random::<f64>();
                let freq = 1.0 + 5.0 * rng.random::<f64>();
                let c: f64 = rng.sample(StandardNormal);
                ([freq * ang.cos(), freq * ang.sin()], c)
            })
            .collect();
        OddNoise { modes, big_s }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| c * ((k[0] * x + k[1] * y) / self.big_s).sin())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_disk_counts() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 58, 0, 0.0).unwrap();
        assert_eq!(m.triangles().len(), 6 * 58 * 58);
        assert_eq!(m.euler_characteristic(), 1);
        let area: f64 = (0..m.triangles().len()).map(|t| m.triangle_area(t)).sum();
        // inscribed 348-gon
        let n = 348.0;
        assert!((area - 0.5 * n * (TAU / n).sin()).abs() < 1e-12);
    }

    #[test]
    fn triangles_are_counterclockwise() {
        let m = make_mesh(Shape::FlatDisk, 1.0, 7, 0, 0.0).unwrap();
        for t in 0..m.triangles().len() {
            let [a, b, c] = m.corners(t);
            let z = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            assert!(z > 0.0);
        }
    }

    #[test]
    fn perturbed_disk_is_odd_and_on_sphere() {
        let m = make_mesh(Shape::PerturbedDisk, 1.0, 10, 3, 0.05).unwrap();
        let zmax = m.vertices().iter().fold(0.0f64, |a, p| a.max(p[2].abs()));
        assert!(zmax <= 0.05 + 1e-15 && zmax > 0.0);
        for v in m.vertices() {
            let w = m.vertices().iter().find(|w| (w[0] + v[0]).abs() < 1e-12 && (w[1] + v[1]).abs() < 1e-12);
            if let Some(w) = w {
                assert!((w[2] + v[2]).abs() < 1e-12);
            }
        }
        let b = make_mesh(Shape::PerturbedDisk, 1.0, 10, 4, 0.05).unwrap();
        assert_ne!(m.vertices(), b.vertices());
    }

    #[test]
    fn tilted_disk_keeps_boundary_on_sphere() {
        let m = make_mesh(Shape::TiltedDisk, 2.0, 12, 0, 0.1).unwrap();
        assert!(m.validate().is_ok());
        assert!(m.vertices().iter().any(|p| p[2].abs() > 0.1));
    }

    #[test]
    fn shapes_parse() {
        for s in Shape::ALL {
            assert_eq!(s.name().parse::<Shape>().unwrap(), s);
        }
        assert!(make_mesh(Shape::FlatDisk, 1.0, 2, 0, 0.0).is_err());
    }
}
