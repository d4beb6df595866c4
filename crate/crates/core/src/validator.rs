//! Constraint satisfaction measurements for a generated mesh.
//!
//! Checks, in report order:
//! - `scaffold_proximity:<stroke>`: p95 distance from the stroke's samples to
//!   the nearest mesh triangle. Hard for retain components, soft for guide.
//! - `containment`: fraction of mesh vertices inside the inflated global box.
//! - `proportion`: sorted, max-normalized mesh extents along the global box
//!   axes against the global aspect.
//! - `relation:<kind>:<subject>:<object>`: soft, one per compiled relation.
//!
//! All length tolerances share one surface allowance
//! `tau = max(min_surface_tolerance, surface_tolerance_fraction × diagonal)`
//! of the global box: it is the proximity threshold, the absolute slack added
//! to the containment box, and (relative to the longest target extent) the
//! absolute slack of the proportion comparison. Without it a surface of any
//! thickness around a planar or linear sketch could never pass.

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::compiler::{relations_between, ComponentGeometry, ConstraintSet, Hardness, RelationKind};
use crate::distance::TriangleBvh;
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;
use crate::obb::{fit_oriented_box, OrientedBox};
use crate::par::Parallelism;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidateError {
    #[error("EmptyMesh: mesh has no triangles")]
    EmptyMesh,
    #[error("DegenerateMesh: {0}")]
    DegenerateMesh(String),
    #[error("InvalidMesh: {0}")]
    InvalidMesh(String),
    #[error("InvalidConstraintSet: {0}")]
    InvalidConstraintSet(String),
    #[error("MalformedReport: {0}")]
    MalformedReport(String),
}

impl ValidateError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidateError::EmptyMesh => "EmptyMesh",
            ValidateError::DegenerateMesh(_) => "DegenerateMesh",
            ValidateError::InvalidMesh(_) => "InvalidMesh",
            ValidateError::InvalidConstraintSet(_) => "InvalidConstraintSet",
            ValidateError::MalformedReport(_) => "MalformedReport",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorParams {
    pub min_surface_tolerance: f64,
    pub surface_tolerance_fraction: f64,
    /// Relative growth of each global half-extent for containment.
    pub containment_inflation: f64,
    pub containment_min_fraction: f64,
    pub proportion_tolerance: f64,
    /// Component boxes are scaled by this factor when assigning vertices.
    pub relation_box_scale: f64,
    pub proximity_percentile: f64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for ValidatorParams {
    fn default() -> Self {
        Self {
            min_surface_tolerance: 0.01,
            surface_tolerance_fraction: 0.05,
            containment_inflation: 0.05,
            containment_min_fraction: 0.99,
            proportion_tolerance: 0.15,
            relation_box_scale: 1.5,
            proximity_percentile: 0.95,
            parallelism: Parallelism::default(),
        }
    }
}

impl ValidatorParams {
    pub fn surface_tolerance(&self, global_box: &OrientedBox) -> f64 {
        self.min_surface_tolerance.max(self.surface_tolerance_fraction * global_box.diagonal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub target: String,
    pub measured: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source_digest: String,
    pub checks: Vec<CheckResult>,
    pub score: f64,
    pub overall_pass: bool,
}

impl ValidationReport {
    pub fn from_checks(source_digest: String, checks: Vec<CheckResult>) -> Self {
        let passing = checks.iter().filter(|c| c.pass).count();
        let score = if checks.is_empty() { 1.0 } else { passing as f64 / checks.len() as f64 };
        let overall_pass = checks.iter().filter(|c| c.kind == CheckKind::Hard).all(|c| c.pass);
        Self { source_digest, checks, score, overall_pass }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, ValidateError> {
        canonical::to_canonical_bytes(self).map_err(|e| ValidateError::MalformedReport(e.to_string()))
    }

    pub fn parse(bytes: &[u8]) -> Result<ValidationReport, ValidateError> {
        canonical::from_json_bytes(bytes).map_err(|e| ValidateError::MalformedReport(e.to_string()))
    }
}

/// Percentile of `values` by linear interpolation between closest ranks.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

fn require_triangles(mesh: &TriangleMesh) -> Result<(), ValidateError> {
    if mesh.is_empty() {
        return Err(ValidateError::EmptyMesh);
    }
    mesh.check().map_err(ValidateError::InvalidMesh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeProximity {
    pub stroke_id: String,
    pub hardness: Hardness,
    pub p95: f64,
}

fn proximity_with(bvh: &TriangleBvh, cs: &ConstraintSet, params: &ValidatorParams) -> Vec<StrokeProximity> {
    params.parallelism.map(&cs.scaffold.edges, |edge| {
        let d: Vec<f64> = edge
            .polyline
            .iter()
            .map(|p| bvh.nearest_distance(*p).unwrap_or(f64::INFINITY))
            .collect();
        StrokeProximity {
            stroke_id: edge.stroke_id.clone(),
            hardness: cs.component_of(&edge.stroke_id).map_or(Hardness::Retain, |c| c.hardness),
            p95: percentile(&d, params.proximity_percentile).unwrap_or(0.0),
        }
    })
}

/// Per-stroke percentile distance from scaffold samples to the mesh surface.
pub fn scaffold_proximity(
    mesh: &TriangleMesh,
    cs: &ConstraintSet,
    params: &ValidatorParams,
) -> Result<Vec<StrokeProximity>, ValidateError> {
    require_triangles(mesh)?;
    Ok(proximity_with(&TriangleBvh::new(mesh.triangle_points()), cs, params))
}

/// Fraction of vertices inside `global_box` grown by the containment
/// inflation and the surface allowance.
pub fn containment_check(
    mesh: &TriangleMesh,
    global_box: &OrientedBox,
    params: &ValidatorParams,
) -> Result<f64, ValidateError> {
    if mesh.vertices.is_empty() {
        return Err(ValidateError::EmptyMesh);
    }
    let tau = params.surface_tolerance(global_box);
    let mut grown = global_box.scaled(1.0 + params.containment_inflation);
    grown.half_extents = grown.half_extents.map(|h| h + tau);
    let inside = params.parallelism.count(&mesh.vertices, |v| grown.contains(*v));
    Ok(inside as f64 / mesh.vertices.len() as f64)
}

/// Mesh extents along the global box axes, sorted descending and divided by
/// the largest.
pub fn proportion_check(mesh: &TriangleMesh, cs: &ConstraintSet) -> Result<[f64; 3], ValidateError> {
    let (lo, hi) = mesh.extents_along(&cs.global_box.axes).ok_or(ValidateError::EmptyMesh)?;
    let mut e = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    e.sort_by(|a, b| b.total_cmp(a));
    if !(e[0] > 0.0) {
        return Err(ValidateError::DegenerateMesh("zero extent along every global axis".into()));
    }
    Ok(e.map(|x| x / e[0]))
}

/// Assign each vertex to a component: the one whose scaled box contains it,
/// nearest center among several, nearest center when none does.
pub fn assign_vertices(mesh: &TriangleMesh, cs: &ConstraintSet, params: &ValidatorParams) -> Vec<usize> {
    let boxes: Vec<OrientedBox> = cs.components.iter().map(|c| c.bbox.scaled(params.relation_box_scale)).collect();
    params.parallelism.map(&mesh.vertices, |v| {
        let nearest = |candidates: &mut dyn Iterator<Item = usize>| {
            candidates
                .map(|i| (boxes[i].center.distance_squared_to(*v), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, i)| i)
        };
        nearest(&mut (0..boxes.len()).filter(|&i| boxes[i].contains(*v)))
            .or_else(|| nearest(&mut (0..boxes.len())))
            .unwrap_or(0)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationOutcome {
    pub kind: RelationKind,
    pub subject: u32,
    pub object: u32,
    pub expected: f64,
    /// Value re-measured on the mesh, if the relation reappeared.
    pub measured: Option<f64>,
}

/// Re-derive relations on mesh vertices grouped by component and report
/// which compiled relations reappear.
pub fn relation_check(mesh: &TriangleMesh, cs: &ConstraintSet, params: &ValidatorParams) -> Vec<RelationOutcome> {
    if cs.relations.is_empty() {
        return Vec::new();
    }
    let labels = assign_vertices(mesh, cs, params);
    let mut groups: Vec<Vec<Point3>> = vec![Vec::new(); cs.components.len()];
    for (v, &l) in mesh.vertices.iter().zip(&labels) {
        groups[l].push(*v);
    }
    let fitted: Vec<(u32, OrientedBox, &Vec<Point3>)> = cs
        .components
        .iter()
        .zip(&groups)
        .filter_map(|(c, pts)| fit_oriented_box(pts).ok().map(|b| (c.component_id, b, pts)))
        .collect();
    let geoms: Vec<ComponentGeometry> =
        fitted.iter().map(|(id, b, pts)| ComponentGeometry { id: *id, bbox: b, points: pts }).collect();
    let found = relations_between(&geoms);
    cs.relations
        .iter()
        .map(|r| RelationOutcome {
            kind: r.kind,
            subject: r.subject,
            object: r.object,
            expected: r.measured,
            measured: found.iter().find(|f| f.key() == r.key()).map(|f| f.measured),
        })
        .collect()
}

fn fmt3(a: [f64; 3]) -> String {
    format!("{:.4}:{:.4}:{:.4}", a[0], a[1], a[2])
}

/// Run every check and assemble the report in its fixed order.
pub fn validate(
    mesh: &TriangleMesh,
    cs: &ConstraintSet,
    params: &ValidatorParams,
) -> Result<ValidationReport, ValidateError> {
    require_triangles(mesh)?;
    cs.validate().map_err(|e| ValidateError::InvalidConstraintSet(e.to_string()))?;
    let tau = params.surface_tolerance(&cs.global_box);
    let mut checks = Vec::new();

    let bvh = TriangleBvh::new(mesh.triangle_points());
    for s in proximity_with(&bvh, cs, params) {
        checks.push(CheckResult {
            name: format!("scaffold_proximity:{}", s.stroke_id),
            kind: if s.hardness == Hardness::Retain { CheckKind::Hard } else { CheckKind::Soft },
            target: format!("p95 distance from stroke {} to surface <= {tau:.4} m", s.stroke_id),
            measured: vec![s.p95],
            tolerance: tau,
            pass: s.p95 <= tau,
        });
    }

    let fraction = containment_check(mesh, &cs.global_box, params)?;
    checks.push(CheckResult {
        name: "containment".into(),
        kind: CheckKind::Hard,
        target: format!(
            "vertices inside global box grown {}% plus {tau:.4} m",
            params.containment_inflation * 100.0
        ),
        measured: vec![fraction],
        tolerance: params.containment_min_fraction,
        pass: fraction >= params.containment_min_fraction,
    });

    let measured = proportion_check(mesh, cs)?;
    let target = cs.global_aspect();
    let slack = tau / cs.global_box.half_extents[0];
    let pass = (0..3).all(|i| (measured[i] - target[i]).abs() <= params.proportion_tolerance * target[i] + slack);
    checks.push(CheckResult {
        name: "proportion".into(),
        kind: CheckKind::Hard,
        target: format!("aspect {} within relative {}", fmt3(target), params.proportion_tolerance),
        measured: measured.to_vec(),
        tolerance: params.proportion_tolerance,
        pass,
    });

    for r in relation_check(mesh, cs, params) {
        checks.push(CheckResult {
            name: format!("relation:{}:{}:{}", r.kind.as_str(), r.subject, r.object),
            kind: CheckKind::Soft,
            target: format!("component {} {} component {}", r.subject, r.kind.as_str(), r.object),
            measured: r.measured.into_iter().collect(),
            tolerance: 0.0,
            pass: r.measured.is_some(),
        });
    }

    Ok(ValidationReport::from_checks(cs.source_digest.clone(), checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileParams};
    use crate::sketch::{EditOp, OpKind, Role, SketchDocument, Stroke};

    fn doc(strokes: Vec<Stroke>) -> SketchDocument {
        let ops: Vec<EditOp> = strokes
            .into_iter()
            .enumerate()
            .map(|(i, s)| EditOp::new(format!("op{i}"), "u", OpKind::AddStroke { stroke: s }))
            .collect();
        SketchDocument::replay("d", &ops).unwrap()
    }

    fn line_cs() -> ConstraintSet {
        let s = Stroke::new("s1", "u", vec![Point3::ZERO, Point3::X]);
        compile(&doc(vec![s]), &CompileParams::default()).unwrap()
    }

    fn box_mesh(lo: Point3, hi: Point3) -> TriangleMesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Point3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            ));
        }
        let t = vec![
            [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
            [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
        ];
        TriangleMesh::new(v, t)
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.95), Some(4.8));
        assert_eq!(percentile(&[7.0], 0.95), Some(7.0));
        assert_eq!(percentile(&[], 0.5), None);
        let v: Vec<f64> = (0..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), Some(95.0));
    }

    #[test]
    fn coincident_triangle_gives_zero_p95() {
        let cs = line_cs();
        let mesh = TriangleMesh::new(vec![Point3::ZERO, Point3::X, Point3::new(0.0, 0.1, 0.0)], vec![[0, 1, 2]]);
        let p = scaffold_proximity(&mesh, &cs, &ValidatorParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].p95 < 1e-12);
    }

    #[test]
    fn far_mesh_fails_proximity_and_containment() {
        let cs = line_cs();
        let mesh = TriangleMesh::new(
            vec![Point3::new(0.0, 10.0, 0.0), Point3::new(1.0, 10.0, 0.0), Point3::new(0.0, 10.0, 0.1)],
            vec![[0, 1, 2]],
        );
        let report = validate(&mesh, &cs, &ValidatorParams::default()).unwrap();
        let prox = report.check("scaffold_proximity:s1").unwrap();
        assert!((prox.measured[0] - 10.0).abs() < 1e-9);
        assert!(!prox.pass);
        assert_eq!(report.check("containment").unwrap().measured, vec![0.0]);
        assert!(!report.overall_pass);
    }

    #[test]
    fn vertex_at_center_is_contained() {
        let cs = line_cs();
        let mesh = TriangleMesh::new(vec![cs.global_box.center], vec![[0, 0, 0]]);
        assert_eq!(containment_check(&mesh, &cs.global_box, &ValidatorParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn proportion_of_exact_box() {
        let b = OrientedBox::world_aligned(Point3::ZERO, [1.0, 0.5, 0.25]);
        let (lo, hi) = b.world_bounds();
        let mesh = box_mesh(lo, hi);
        let mut cs = line_cs();
        cs.global_box = b;
        assert_eq!(proportion_check(&mesh, &cs).unwrap(), [1.0, 0.5, 0.25]);
    }

    #[test]
    fn proportion_rejects_cube_against_slender_target() {
        let mut cs = line_cs();
        cs.global_box = OrientedBox::world_aligned(Point3::ZERO, [1.0, 0.4, 0.4]);
        cs.components[0].bbox = cs.global_box.clone();
        cs.components[0].extents_sorted = cs.global_box.full_extents();
        let mesh = box_mesh(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        let report = validate(&mesh, &cs, &ValidatorParams::default()).unwrap();
        let p = report.check("proportion").unwrap();
        assert_eq!(p.measured, vec![1.0, 1.0, 1.0]);
        assert!(!p.pass);
    }

    #[test]
    fn empty_and_flat_meshes() {
        let cs = line_cs();
        assert_eq!(validate(&TriangleMesh::default(), &cs, &ValidatorParams::default()), Err(ValidateError::EmptyMesh));
        let dot = TriangleMesh::new(vec![Point3::ZERO], vec![[0, 0, 0]]);
        assert!(matches!(proportion_check(&dot, &cs), Err(ValidateError::DegenerateMesh(_))));
    }

    #[test]
    fn guide_strokes_are_soft() {
        let a = Stroke::new("a", "u", vec![Point3::ZERO, Point3::X]).with_role(Role::Scaffold);
        let cs = compile(&doc(vec![a]), &CompileParams::default()).unwrap();
        let far = TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 5.0), Point3::new(1.0, 0.0, 5.0), Point3::new(0.0, 0.1, 5.0)],
            vec![[0, 1, 2]],
        );
        let r = validate(&far, &cs, &ValidatorParams::default()).unwrap();
        assert_eq!(r.check("scaffold_proximity:a").unwrap().kind, CheckKind::Soft);
    }

    #[test]
    fn score_counts_passing_checks() {
        let check = |kind, pass| CheckResult {
            name: String::new(),
            kind,
            target: String::new(),
            measured: vec![],
            tolerance: 0.0,
            pass,
        };
        let r = ValidationReport::from_checks(
            String::new(),
            vec![
                check(CheckKind::Hard, true),
                check(CheckKind::Hard, true),
                check(CheckKind::Soft, true),
                check(CheckKind::Soft, false),
            ],
        );
        assert_eq!(r.score, 0.75);
        assert!(r.overall_pass);
        let bytes = r.to_canonical_bytes().unwrap();
        assert_eq!(ValidationReport::parse(&bytes).unwrap(), r);
    }

    #[test]
    fn single_component_has_no_relation_checks() {
        let cs = line_cs();
        let mesh = TriangleMesh::new(vec![Point3::ZERO, Point3::X, Point3::new(0.0, 0.01, 0.0)], vec![[0, 1, 2]]);
        assert!(relation_check(&mesh, &cs, &ValidatorParams::default()).is_empty());
    }
}
