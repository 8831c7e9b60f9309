use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ply, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = Self { vertices, faces };
        m.validate()?;
        Ok(m)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Face indices in range, no repeated index within a face.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidInput(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive when faces wind counter-clockwise
    /// seen from outside.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// True when every undirected edge is shared by exactly two faces with
    /// opposite orientation.
    pub fn is_closed(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                *directed.entry((f[e], f[(e + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| f.map(|i| i + off)));
    }

    pub fn write_ply(&self, path: impl AsRef<Path>, format: ply::Format) -> Result<()> {
        ply::write_mesh(path, &self.vertices, &self.faces, format)
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Loads a `.ply` or `.obj` mesh; polygons are fanned into triangles.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("ply") => {
                let d = ply::read(path)?;
                TriMesh::new(d.cloud.points, d.faces)
            }
            Some("obj") => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Self::parse_obj(&text, &path.display().to_string())
            }
            _ => Err(Error::InvalidInput(format!(
                "{}: mesh must be .ply or .obj",
                path.display()
            ))),
        }
    }

    fn parse_obj(text: &str, ctx: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let bad = || Error::parse(format!("{ctx}:{}", ln + 1), format!("malformed line '{line}'"));
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("v") => {
                    let c: Vec<f64> = tok.take(3).map(str::parse).collect::<Result<_, _>>().map_err(|_| bad())?;
                    if c.len() != 3 {
                        return Err(bad());
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = tok
                        .map(|t| {
                            let i: i64 = t.split('/').next().unwrap_or("").parse().map_err(|_| bad())?;
                            let n = vertices.len() as i64;
                            let i = if i < 0 { n + i } else { i - 1 };
                            usize::try_from(i).map_err(|_| bad())
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(bad());
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriMesh::new(vertices, faces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriMesh {
        TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(TriMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn tetra_is_closed_with_positive_volume() {
        let t = tetra();
        assert!(t.is_closed());
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ply_and_obj_export_reload() {
        let dir = tempfile::tempdir().unwrap();
        let t = tetra();
        for name in ["t.ply", "t.obj"] {
            let p = dir.path().join(name);
            if name.ends_with("ply") {
                t.write_ply(&p, ply::Format::Ascii).unwrap();
            } else {
                t.write_obj(&p).unwrap();
            }
            let back = TriMesh::read(&p).unwrap();
            assert_eq!(back.faces, t.faces);
            assert_eq!(back.vertices, t.vertices);
        }
    }

    #[test]
    fn obj_quads_are_fanned() {
        let m = TriMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n", "q").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!((m.area() - 1.0).abs() < 1e-12);
    }
}
