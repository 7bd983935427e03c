use std::io::{BufRead, Write};

use super::{Topology, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Wavefront OBJ in chart coordinates. The chart radius and topology are
/// stored in comment lines so the mesh can be read back and revalidated.
pub fn write_obj<W: Write>(mesh: &TriMesh, mut out: W) -> Result<()> {
    writeln!(out, "# chart_radius {:?}", mesh.chart_radius())?;
    writeln!(out, "# topology {}", mesh.topology())?;
    for p in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], p[2])?;
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn read_obj<R: BufRead>(input: R) -> Result<TriMesh> {
    let mut big_s = None;
    let mut topology = None;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
        match it.next() {
            Some("#") => match (it.next(), it.next()) {
                (Some("chart_radius"), Some(v)) => big_s = Some(v.parse::<f64>().map_err(|_| bad("bad chart radius"))?),
                (Some("topology"), Some(v)) => topology = Some(v.parse::<Topology>()?),
                _ => {}
            },
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    *c = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad vertex"))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut t = [0usize; 3];
                for c in &mut t {
                    // accept `i/vt/vn` records, keep the position index
                    let idx: usize = it
                        .next()
                        .and_then(|x| x.split('/').next())
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("bad face"))?;
                    if idx == 0 {
                        return Err(bad("face index 0"));
                    }
                    *c = idx - 1;
                }
                if it.next().is_some() {
                    return Err(bad("only triangular faces are supported"));
                }
                triangles.push(t);
            }
            _ => {}
        }
    }
    let big_s = big_s.ok_or_else(|| Error::Parse("missing `# chart_radius` line".into()))?;
    let topology = topology.unwrap_or(Topology::Disk);
    TriMesh::new(vertices, triangles, big_s, topology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, Shape};

    #[test]
    fn round_trip_is_exact() {
        for shape in Shape::ALL {
            let m = make_mesh(shape, 1.3, 6, 9, 0.1).unwrap();
            let mut buf = Vec::new();
            write_obj(&m, &mut buf).unwrap();
            let back = read_obj(buf.as_slice()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn rejects_quads() {
        let text = "# chart_radius 1.0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 1 1 1\nf 1 2 3 4\n";
        assert!(matches!(read_obj(text.as_bytes()), Err(Error::Parse(_))));
    }
}
