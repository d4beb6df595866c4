//! Procedural stand-in for a generative model: tubes along the scaffold.
//!
//! Every scaffold edge becomes a closed tube with a regular 8-gon cross
//! section, one ring per polyline sample, side quads split along the same
//! diagonal and triangle-fan caps. Each junction node gets an octahedron.
//! The tube radius of a component is `max(0.005, 0.03 × box diagonal)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use super::{BackendError, GenerationBackend, TaskState, TaskStatus};
use crate::compiler::ConstraintSet;
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;
use crate::prompt::GenerationRequest;

pub const RING_SIDES: usize = 8;
pub const MIN_TUBE_RADIUS: f64 = 0.005;
pub const TUBE_RADIUS_FRACTION: f64 = 0.03;

pub fn tube_radius(component_diagonal: f64) -> f64 {
    MIN_TUBE_RADIUS.max(TUBE_RADIUS_FRACTION * component_diagonal)
}

/// Tube radius for each stroke id.
pub fn stroke_radii(cs: &ConstraintSet) -> BTreeMap<String, f64> {
    cs.components
        .iter()
        .flat_map(|c| {
            let r = tube_radius(c.bbox.diagonal());
            c.stroke_ids.iter().map(move |s| (s.clone(), r))
        })
        .collect()
}

/// A unit vector perpendicular to `t`, built from the world axis least
/// aligned with it.
fn any_perpendicular(t: Point3) -> Point3 {
    let a = t.to_array().map(f64::abs);
    let axis = if a[0] <= a[1] && a[0] <= a[2] {
        Point3::X
    } else if a[1] <= a[2] {
        Point3::Y
    } else {
        Point3::Z
    };
    t.cross(axis).normalized().unwrap_or(Point3::Y)
}

fn tangents(points: &[Point3]) -> Vec<Point3> {
    let n = points.len();
    let mut out: Vec<Point3> = Vec::with_capacity(n);
    for i in 0..n {
        let ahead = points[(i + 1).min(n - 1)];
        let behind = points[i.saturating_sub(1)];
        let t = (ahead - behind)
            .normalized()
            .or_else(|| (ahead - points[i]).normalized())
            .or_else(|| (points[i] - behind).normalized())
            .or_else(|| out.last().copied())
            .unwrap_or(Point3::X);
        out.push(t);
    }
    out
}

/// Rings around `points` with frames carried along by parallel transport.
fn rings(points: &[Point3], radius: f64) -> Vec<[Point3; RING_SIDES]> {
    let ts = tangents(points);
    let mut normal = any_perpendicular(ts[0]);
    let mut out = Vec::with_capacity(points.len());
    for (p, t) in points.iter().zip(&ts) {
        normal = (normal - *t * normal.dot(*t)).normalized().unwrap_or_else(|| any_perpendicular(*t));
        let binormal = t.cross(normal);
        out.push(std::array::from_fn(|k| {
            let theta = TAU * k as f64 / RING_SIDES as f64;
            *p + (normal * theta.cos() + binormal * theta.sin()) * radius
        }));
    }
    out
}

/// Closed tube along `points` (at least two).
pub fn tube(points: &[Point3], radius: f64) -> TriangleMesh {
    let rings = rings(points, radius);
    let n = rings.len() as u32;
    let s = RING_SIDES as u32;
    let mut vertices: Vec<Point3> = rings.iter().flat_map(|r| r.iter().copied()).collect();
    let mut triangles = Vec::new();
    for i in 0..n - 1 {
        for k in 0..s {
            let a = i * s + k;
            let b = i * s + (k + 1) % s;
            let c = (i + 1) * s + (k + 1) % s;
            let d = (i + 1) * s + k;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let start = vertices.len() as u32;
    vertices.push(points[0]);
    for k in 0..s {
        triangles.push([start, (k + 1) % s, k]);
    }
    let end = vertices.len() as u32;
    vertices.push(points[points.len() - 1]);
    let last = (n - 1) * s;
    for k in 0..s {
        triangles.push([end, last + k, last + (k + 1) % s]);
    }
    TriangleMesh { vertices, triangles }
}

pub fn octahedron(center: Point3, radius: f64) -> TriangleMesh {
    let vertices = vec![
        center + Point3::X * radius,
        center - Point3::X * radius,
        center + Point3::Y * radius,
        center - Point3::Y * radius,
        center + Point3::Z * radius,
        center - Point3::Z * radius,
    ];
    let triangles = vec![
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ];
    TriangleMesh { vertices, triangles }
}

/// Tubes for every scaffold edge followed by octahedra for every node.
pub fn mock_generate(cs: &ConstraintSet) -> Result<TriangleMesh, BackendError> {
    if cs.components.is_empty() || cs.scaffold.edges.is_empty() {
        return Err(BackendError::EmptyConstraintSet);
    }
    let radii = stroke_radii(cs);
    let mut mesh = TriangleMesh::default();
    let mut node_radius: Vec<Option<f64>> = vec![None; cs.scaffold.nodes.len()];
    for edge in &cs.scaffold.edges {
        let r = radii.get(&edge.stroke_id).copied().unwrap_or(MIN_TUBE_RADIUS);
        if edge.polyline.len() >= 2 {
            mesh.append(&tube(&edge.polyline, r));
        }
        for node in [edge.a, edge.b] {
            node_radius[node].get_or_insert(r);
        }
    }
    for (node, r) in cs.scaffold.nodes.iter().zip(&node_radius) {
        mesh.append(&octahedron(*node, r.unwrap_or(MIN_TUBE_RADIUS)));
    }
    Ok(mesh)
}

/// Completes every task on its first poll.
#[derive(Debug, Default)]
pub struct MockBackend {
    tasks: BTreeMap<String, GenerationRequest>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl GenerationBackend for MockBackend {
    fn kind(&self) -> &'static str {
        "mock"
    }

    fn submit(&mut self, req: &GenerationRequest) -> Result<String, BackendError> {
        if req.constraint_set.components.is_empty() {
            return Err(BackendError::EmptyConstraintSet);
        }
        let id = format!("mock-{}", req.request_id);
        self.tasks.insert(id.clone(), req.clone());
        Ok(id)
    }

    fn poll(&mut self, task_id: &str) -> Result<TaskStatus, BackendError> {
        let req = self.tasks.get(task_id).ok_or_else(|| BackendError::UnknownTask(task_id.to_string()))?;
        let mesh = mock_generate(&req.constraint_set)?;
        Ok(TaskStatus { state: TaskState::Succeeded, progress: Some(100), failure_reason: None, asset: Some(mesh) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileParams};
    use crate::mesh::export_mesh_obj;
    use crate::sketch::{EditOp, OpKind, SketchDocument, Stroke};

    fn cs_of(strokes: Vec<Stroke>) -> ConstraintSet {
        let ops: Vec<EditOp> = strokes
            .into_iter()
            .enumerate()
            .map(|(i, s)| EditOp::new(format!("op{i}"), "u", OpKind::AddStroke { stroke: s }))
            .collect();
        let doc = SketchDocument::replay("d", &ops).unwrap();
        compile(&doc, &CompileParams { resample_spacing: 10.0, epsilon: Some(0.01) }).unwrap()
    }

    #[test]
    fn two_sample_segment_counts() {
        let cs = cs_of(vec![Stroke::new("s", "u", vec![Point3::ZERO, Point3::X])]);
        assert_eq!(cs.scaffold.edges[0].polyline.len(), 2);
        let t = tube(&cs.scaffold.edges[0].polyline, 0.03);
        assert_eq!((t.vertices.len(), t.triangles.len()), (18, 32));
        let m = mock_generate(&cs).unwrap();
        assert_eq!((m.vertices.len(), m.triangles.len()), (18 + 12, 32 + 16));
    }

    #[test]
    fn ring_vertices_at_radius_and_perpendicular() {
        let pts = vec![Point3::ZERO, Point3::new(1.0, 1.0, 0.0), Point3::new(2.0, 1.0, 3.0)];
        let r = 0.05;
        let mesh = tube(&pts, r);
        let ts = tangents(&pts);
        for (i, p) in pts.iter().enumerate() {
            for k in 0..RING_SIDES {
                let v = mesh.vertices[i * RING_SIDES + k];
                assert!(((v - *p).norm() - r).abs() < 1e-12);
                assert!((v - *p).dot(ts[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radius_follows_component_diagonal() {
        assert_eq!(tube_radius(0.1), 0.005);
        assert!((tube_radius(2.0) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn deterministic_export() {
        let cs = cs_of(vec![
            Stroke::new("a", "u", vec![Point3::ZERO, Point3::X, Point3::new(1.0, 1.0, 0.0)]),
            Stroke::new("b", "u", vec![Point3::new(1.0, 1.0, 0.0), Point3::new(1.0, 1.0, 1.0)]),
        ]);
        let a = export_mesh_obj(&mock_generate(&cs).unwrap());
        let b = export_mesh_obj(&mock_generate(&cs).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn empty_constraint_set_rejected() {
        let mut cs = cs_of(vec![Stroke::new("s", "u", vec![Point3::ZERO, Point3::X])]);
        cs.components.clear();
        assert_eq!(mock_generate(&cs), Err(BackendError::EmptyConstraintSet));
    }
}
