//! Triangle meshes and the Wavefront OBJ subset used for generated assets.
//!
//! Accepted statements: `v x y z` and `f a b c ...` with 1-based indices
//! (`a/b/c` forms use the first field). Polygons are fan-triangulated from
//! their first index. `#`, `vn`, `vt`, `o`, `g`, `s`, `usemtl` and `mtllib`
//! lines are skipped, as are other unrecognized statements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjError {
    #[error("MalformedObj: line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn malformed(line: usize, reason: impl Into<String>) -> ObjError {
    ObjError::Malformed { line, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    /// 0-based vertex indices.
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        Self { vertices, triangles }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn triangle_points(&self) -> Vec<[Point3; 3]> {
        (0..self.triangles.len()).map(|i| self.triangle(i)).collect()
    }

    /// Indices in range and coordinates finite.
    pub fn check(&self) -> Result<(), String> {
        if !self.vertices.iter().all(Point3::is_finite) {
            return Err("non-finite vertex coordinate".into());
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(format!("triangle {t:?} references a vertex beyond {n}"));
        }
        Ok(())
    }

    /// Append `other`, re-indexing its triangles.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
    }

    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> TriangleMesh {
        TriangleMesh { vertices: self.vertices.iter().map(|p| f(*p)).collect(), triangles: self.triangles.clone() }
    }

    /// Per-axis (min, max) of the vertices projected onto `axes`.
    pub fn extents_along(&self, axes: &[Point3; 3]) -> Option<([f64; 3], [f64; 3])> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for i in 0..3 {
                let t = v.dot(axes[i]);
                lo[i] = lo[i].min(t);
                hi[i] = hi[i].max(t);
            }
        }
        Some((lo, hi))
    }
}

/// Parse the OBJ subset.
pub fn load_mesh_obj(bytes: &[u8]) -> Result<TriangleMesh, ObjError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(0, format!("not UTF-8: {e}")))?;
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, Vec<u32>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else { continue };
        if keyword.starts_with('#') {
            continue;
        }
        match keyword {
            "v" => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok = tokens.next().ok_or_else(|| malformed(lineno, "vertex needs three coordinates"))?;
                    *c = tok
                        .parse::<f64>()
                        .map_err(|_| malformed(lineno, format!("non-numeric coordinate {tok:?}")))?;
                    if !c.is_finite() {
                        return Err(malformed(lineno, format!("non-finite coordinate {tok:?}")));
                    }
                }
                vertices.push(Point3::from(coords));
            }
            "f" => {
                let mut idx = Vec::new();
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let v: i64 = first
                        .parse()
                        .map_err(|_| malformed(lineno, format!("bad face index {tok:?}")))?;
                    if v < 0 {
                        return Err(malformed(lineno, "negative face indices are not supported"));
                    }
                    if v == 0 || v > u32::MAX as i64 {
                        return Err(malformed(lineno, format!("face index {v} out of range")));
                    }
                    idx.push((v - 1) as u32);
                }
                if idx.len() < 3 {
                    return Err(malformed(lineno, format!("face has {} vertices, need at least 3", idx.len())));
                }
                faces.push((lineno, idx));
            }
            _ => {}
        }
    }
    let n = vertices.len() as u32;
    let mut triangles = Vec::new();
    for (lineno, idx) in faces {
        if let Some(bad) = idx.iter().find(|&&i| i >= n) {
            return Err(malformed(lineno, format!("face index {} exceeds vertex count {n}", bad + 1)));
        }
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}

/// Write vertices then triangular faces; floats in shortest round-trip form.
pub fn export_mesh_obj(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.triangles.len() * 16);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let m = load_mesh_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = load_mesh_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_forms_and_ignored_lines() {
        let src = b"# c\nmtllib x.mtl\no obj\ng grp\ns 1\nusemtl m\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/2/1 3//1\n";
        let m = load_mesh_obj(src).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn malformed_inputs() {
        let bad: [&[u8]; 6] = [
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n",
            b"v 0 0 zero\n",
            b"v 0 0 0\nv 1 0 0\nf 1 2\n",
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n",
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n",
            b"v 0 0\n",
        ];
        for src in bad {
            assert!(load_mesh_obj(src).is_err(), "{:?}", std::str::from_utf8(src));
        }
    }

    #[test]
    fn export_format() {
        let m = TriangleMesh::new(
            vec![Point3::new(0.0, 0.5, -1.0), Point3::new(0.1, 1e-7, 3.0), Point3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        );
        let text = String::from_utf8(export_mesh_obj(&m)).unwrap();
        assert_eq!(text, "v 0 0.5 -1\nv 0.1 0.0000001 3\nv 2 0 0\nf 1 2 3\n");
        assert_eq!(load_mesh_obj(text.as_bytes()).unwrap(), m);
    }
}
