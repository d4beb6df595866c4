//! Post-hoc similarity fit of a mesh into a target box.

use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;
use crate::obb::OrientedBox;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub mesh: TriangleMesh,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub scale: f64,
    /// Box axes along which the input mesh had zero extent.
    pub degenerate_axes: Vec<usize>,
}

/// Uniformly scale `mesh` so it fits `target` along every box axis, then move
/// the center of its box-frame bounds onto the box center.
///
/// Axes where the mesh is flat are skipped when choosing the scale and
/// reported; a mesh flat on all three axes is an error.
pub fn enforce_fit(mesh: &TriangleMesh, target: &OrientedBox) -> Result<FitOutcome, BackendError> {
    if mesh.vertices.is_empty() {
        return Err(BackendError::DegenerateMesh("mesh has no vertices".into()));
    }
    let local: Vec<Point3> = mesh.vertices.iter().map(|v| target.to_local(*v)).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &local {
        for i in 0..3 {
            lo[i] = lo[i].min(p.component(i));
            hi[i] = hi[i].max(p.component(i));
        }
    }
    let mut scale = f64::INFINITY;
    let mut degenerate_axes = Vec::new();
    for i in 0..3 {
        let extent = hi[i] - lo[i];
        if extent > 0.0 {
            scale = scale.min(2.0 * target.half_extents[i] / extent);
        } else {
            degenerate_axes.push(i);
        }
    }
    if degenerate_axes.len() == 3 {
        return Err(BackendError::DegenerateMesh("zero extent along every box axis".into()));
    }
    let mid = Point3::new((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0);
    let vertices = local.iter().map(|p| target.to_world((*p - mid) * scale)).collect();
    Ok(FitOutcome {
        mesh: TriangleMesh { vertices, triangles: mesh.triangles.clone() },
        report: FitReport { scale, degenerate_axes },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(lo: f64, hi: f64) -> TriangleMesh {
        let mut v = Vec::new();
        for i in 0..8 {
            let c = |bit: usize| if i & bit == 0 { lo } else { hi };
            v.push(Point3::new(c(1), c(2), c(4)));
        }
        TriangleMesh::new(v, vec![[0, 1, 2], [4, 5, 6]])
    }

    #[test]
    fn unit_cube_into_unit_half_extents_scales_by_two() {
        let b = OrientedBox::world_aligned(Point3::new(5.0, 0.0, 0.0), [1.0, 1.0, 1.0]);
        let out = enforce_fit(&cube(0.0, 1.0), &b).unwrap();
        assert_eq!(out.report.scale, 2.0);
        assert_eq!(out.mesh.vertices[0], Point3::new(4.0, -1.0, -1.0));
        assert_eq!(out.mesh.vertices[7], Point3::new(6.0, 1.0, 1.0));
    }

    #[test]
    fn fitting_mesh_only_translates() {
        let b = OrientedBox::world_aligned(Point3::new(1.0, 1.0, 1.0), [1.0, 1.0, 1.0]);
        let out = enforce_fit(&cube(-1.0, 1.0), &b).unwrap();
        assert_eq!(out.report.scale, 1.0);
        assert_eq!(out.mesh.vertices[0], Point3::ZERO);
    }

    #[test]
    fn elongated_mesh_limited_by_long_axis() {
        let mut m = cube(0.0, 1.0);
        for v in &mut m.vertices {
            v.x *= 4.0;
        }
        let b = OrientedBox::world_aligned(Point3::ZERO, [1.0, 1.0, 1.0]);
        assert_eq!(enforce_fit(&m, &b).unwrap().report.scale, 0.5);
    }

    #[test]
    fn flat_axis_is_flagged_and_point_rejected() {
        let flat = TriangleMesh::new(vec![Point3::ZERO, Point3::X, Point3::Y], vec![[0, 1, 2]]);
        let b = OrientedBox::world_aligned(Point3::ZERO, [2.0, 1.0, 0.5]);
        let out = enforce_fit(&flat, &b).unwrap();
        assert_eq!(out.report.degenerate_axes, vec![2]);
        assert_eq!(out.report.scale, 2.0);
        let dot = TriangleMesh::new(vec![Point3::X; 3], vec![[0, 1, 2]]);
        assert!(matches!(enforce_fit(&dot, &b), Err(BackendError::DegenerateMesh(_))));
    }
}
