//! Sketch-to-constraint compilation.
//!
//! [`compile`] turns a [`SketchDocument`] into a [`ConstraintSet`]: a global
//! bounding region, per-component oriented boxes with proportions and
//! retain/guide hardness, a junction graph used as the structural scaffold,
//! and Above/Contains/Adjacent relations between components.

pub mod junction;
pub mod relations;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::geometry::Point3;
use crate::obb::{fit_oriented_box, BoxFitError, OrientedBox};
use crate::polyline::segment_lengths;
use crate::sketch::{resample_stroke, Role, SketchDocument, SketchError};

pub use junction::{connected_components, JunctionGraph, PreparedStroke, ScaffoldEdge};
pub use relations::{relations_between, ComponentGeometry, RelationKind, SpatialRelation};

pub const CONSTRAINT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RESAMPLE_SPACING: f64 = 0.01;
/// Lower bound of the automatic junction merge distance.
pub const MIN_AUTO_EPSILON: f64 = 0.01;
/// Automatic epsilon is this multiple of the median raw segment length.
pub const AUTO_EPSILON_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("EmptySketch: document has no strokes")]
    EmptySketch,
    #[error("NonPositiveEpsilon: junction epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    BoxFit(#[from] BoxFitError),
    #[error("MalformedConstraintSet: {0}")]
    MalformedConstraintSet(String),
}

impl CompileError {
    pub fn code(&self) -> &'static str {
        match self {
            CompileError::EmptySketch => "EmptySketch",
            CompileError::NonPositiveEpsilon(_) => "NonPositiveEpsilon",
            CompileError::Sketch(e) => e.code(),
            CompileError::BoxFit(_) => "BoxFitError",
            CompileError::MalformedConstraintSet(_) => "MalformedConstraintSet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileParams {
    pub resample_spacing: f64,
    /// `None` selects `max(0.01, 1.5 × median raw segment length)`.
    pub epsilon: Option<f64>,
}

impl Default for CompileParams {
    fn default() -> Self {
        Self { resample_spacing: DEFAULT_RESAMPLE_SPACING, epsilon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hardness {
    /// Must be preserved by generation.
    Retain,
    /// Guides volumetric completion only.
    Guide,
}

impl Hardness {
    pub fn as_str(self) -> &'static str {
        match self {
            Hardness::Retain => "retain",
            Hardness::Guide => "guide",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub component_id: u32,
    pub stroke_ids: Vec<String>,
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub extents_sorted: [f64; 3],
    pub hardness: Hardness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentProportion {
    pub component_id: u32,
    /// Component max extent over global max extent.
    pub scale_ratio: f64,
    /// Sorted extents over the component's max extent.
    pub aspect: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub schema_version: u32,
    pub source_digest: String,
    pub source_revision: u64,
    pub resample_spacing: f64,
    pub junction_epsilon: f64,
    pub global_box: OrientedBox,
    pub components: Vec<Component>,
    pub relations: Vec<SpatialRelation>,
    pub scaffold: JunctionGraph,
    pub proportions: Vec<ComponentProportion>,
}

/// Retain if any member is a Contour or Anchor; Guide if all are Scaffold.
pub fn assign_hardness(roles: &[Role]) -> Hardness {
    if roles.iter().any(|r| matches!(r, Role::Contour | Role::Anchor)) {
        Hardness::Retain
    } else {
        Hardness::Guide
    }
}

/// Apply calibration and resample every stroke, ascending stroke id.
pub fn prepare_strokes(doc: &SketchDocument, spacing: f64) -> Result<Vec<PreparedStroke>, SketchError> {
    let scale = doc.calibration_scale;
    doc.strokes
        .values()
        .map(|s| {
            let mut calibrated = s.clone();
            for p in &mut calibrated.points {
                *p = *p * scale;
            }
            let samples = resample_stroke(&calibrated, spacing)?;
            Ok(PreparedStroke {
                stroke_id: s.stroke_id.clone(),
                role: s.role,
                points: calibrated.points,
                samples,
            })
        })
        .collect()
}

/// `max(0.01, 1.5 × median segment length)` over the calibrated raw strokes.
pub fn default_epsilon(strokes: &[PreparedStroke]) -> f64 {
    let mut lengths: Vec<f64> = strokes.iter().flat_map(|s| segment_lengths(&s.points)).collect();
    if lengths.is_empty() {
        return MIN_AUTO_EPSILON;
    }
    lengths.sort_by(f64::total_cmp);
    let n = lengths.len();
    let median = if n % 2 == 1 { lengths[n / 2] } else { 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]) };
    MIN_AUTO_EPSILON.max(AUTO_EPSILON_FACTOR * median)
}

/// Junction graph of the calibrated, resampled document.
pub fn build_junction_graph(
    doc: &SketchDocument,
    epsilon: f64,
    resample_spacing: f64,
) -> Result<JunctionGraph, CompileError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CompileError::NonPositiveEpsilon(epsilon));
    }
    let prepared = prepare_strokes(doc, resample_spacing)?;
    Ok(junction::merge_endpoints(&prepared, epsilon))
}

pub fn compute_proportions(components: &[Component], global_box: &OrientedBox) -> Vec<ComponentProportion> {
    let global_max = 2.0 * global_box.half_extents[0];
    components
        .iter()
        .map(|c| {
            let max = c.extents_sorted[0];
            ComponentProportion {
                component_id: c.component_id,
                // A rotated component box can be longer than the global box's
                // longest side; the ratio is capped at 1.
                scale_ratio: (max / global_max).min(1.0),
                aspect: c.extents_sorted.map(|e| e / max),
            }
        })
        .collect()
}

/// Relations between compiled components, measured on their scaffold samples.
pub fn derive_relations(components: &[Component], scaffold: &JunctionGraph) -> Vec<SpatialRelation> {
    let samples = component_samples(components, scaffold);
    let geoms: Vec<ComponentGeometry> = components
        .iter()
        .zip(&samples)
        .map(|(c, pts)| ComponentGeometry { id: c.component_id, bbox: &c.bbox, points: pts })
        .collect();
    relations_between(&geoms)
}

/// Concatenated scaffold samples of each component, in component order.
pub fn component_samples(components: &[Component], scaffold: &JunctionGraph) -> Vec<Vec<Point3>> {
    let by_id: BTreeMap<&str, &ScaffoldEdge> =
        scaffold.edges.iter().map(|e| (e.stroke_id.as_str(), e)).collect();
    components
        .iter()
        .map(|c| {
            c.stroke_ids
                .iter()
                .filter_map(|id| by_id.get(id.as_str()))
                .flat_map(|e| e.polyline.iter().copied())
                .collect()
        })
        .collect()
}

/// Compile `doc` into its constraint set. Pure and deterministic.
pub fn compile(doc: &SketchDocument, params: &CompileParams) -> Result<ConstraintSet, CompileError> {
    if doc.is_empty() {
        return Err(CompileError::EmptySketch);
    }
    let prepared = prepare_strokes(doc, params.resample_spacing)?;
    let epsilon = params.epsilon.unwrap_or_else(|| default_epsilon(&prepared));
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CompileError::NonPositiveEpsilon(epsilon));
    }
    let scaffold = junction::merge_endpoints(&prepared, epsilon);
    let index: BTreeMap<&str, &PreparedStroke> =
        prepared.iter().map(|s| (s.stroke_id.as_str(), s)).collect();

    let mut components = Vec::new();
    for (i, ids) in connected_components(&scaffold).into_iter().enumerate() {
        let members: Vec<&PreparedStroke> = ids.iter().map(|id| index[id.as_str()]).collect();
        let samples: Vec<Point3> = members.iter().flat_map(|s| s.samples.iter().copied()).collect();
        let roles: Vec<Role> = members.iter().map(|s| s.role).collect();
        let bbox = fit_oriented_box(&samples)?;
        components.push(Component {
            component_id: i as u32 + 1,
            stroke_ids: ids,
            extents_sorted: bbox.full_extents(),
            bbox,
            hardness: assign_hardness(&roles),
        });
    }

    let all: Vec<Point3> = prepared.iter().flat_map(|s| s.samples.iter().copied()).collect();
    let global_box = fit_oriented_box(&all)?;
    let proportions = compute_proportions(&components, &global_box);
    let relations = derive_relations(&components, &scaffold);

    Ok(ConstraintSet {
        schema_version: CONSTRAINT_SCHEMA_VERSION,
        source_digest: doc.digest()?,
        source_revision: doc.revision,
        resample_spacing: params.resample_spacing,
        junction_epsilon: epsilon,
        global_box,
        components,
        relations,
        scaffold,
        proportions,
    })
}

impl ConstraintSet {
    /// Global box extents, sorted descending, normalized by the largest.
    pub fn global_aspect(&self) -> [f64; 3] {
        let e = self.global_box.full_extents();
        e.map(|x| x / e[0])
    }

    pub fn component(&self, id: u32) -> Option<&Component> {
        self.components.iter().find(|c| c.component_id == id)
    }

    /// Component owning `stroke_id`.
    pub fn component_of(&self, stroke_id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.stroke_ids.iter().any(|s| s == stroke_id))
    }

    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, CompileError> {
        canonical::to_canonical_bytes(self).map_err(|e| CompileError::MalformedConstraintSet(e.to_string()))
    }

    pub fn parse(bytes: &[u8]) -> Result<ConstraintSet, CompileError> {
        let cs: ConstraintSet = canonical::from_json_bytes(bytes)
            .map_err(|e| CompileError::MalformedConstraintSet(e.to_string()))?;
        cs.validate()?;
        Ok(cs)
    }

    /// Check every structural invariant of a constraint set.
    pub fn validate(&self) -> Result<(), CompileError> {
        let bad = |m: String| Err(CompileError::MalformedConstraintSet(m));
        if self.schema_version != CONSTRAINT_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.source_digest.len() != 64 || !self.source_digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return bad("source_digest is not a 64-char hex digest".into());
        }
        if !(self.resample_spacing > 0.0) || !(self.junction_epsilon > 0.0) {
            return bad("resample_spacing and junction_epsilon must be positive".into());
        }
        check_box("global_box", &self.global_box)?;
        if self.components.is_empty() {
            return bad("no components".into());
        }

        let edge_ids: BTreeSet<&str> = self.scaffold.edges.iter().map(|e| e.stroke_id.as_str()).collect();
        if edge_ids.len() != self.scaffold.edges.len() {
            return bad("scaffold has more than one edge for a stroke".into());
        }
        for e in &self.scaffold.edges {
            if e.a >= self.scaffold.nodes.len() || e.b >= self.scaffold.nodes.len() {
                return bad(format!("edge {} references a missing node", e.stroke_id));
            }
            if e.polyline.len() < 2 || !e.polyline.iter().all(Point3::is_finite) {
                return bad(format!("edge {} polyline is degenerate", e.stroke_id));
            }
        }

        let mut seen = BTreeSet::new();
        for (i, c) in self.components.iter().enumerate() {
            if c.component_id != i as u32 + 1 {
                return bad(format!("component ids must be 1..n in order, found {}", c.component_id));
            }
            if c.stroke_ids.is_empty() {
                return bad(format!("component {} has no strokes", c.component_id));
            }
            check_box(&format!("component {} box", c.component_id), &c.bbox)?;
            for (k, e) in c.extents_sorted.iter().enumerate() {
                let expected = 2.0 * c.bbox.half_extents[k];
                if (e - expected).abs() > 1e-12 * expected.max(1.0) {
                    return bad(format!("component {} extents_sorted disagree with its box", c.component_id));
                }
            }
            for s in &c.stroke_ids {
                if !edge_ids.contains(s.as_str()) {
                    return bad(format!("component {} lists unknown stroke {s:?}", c.component_id));
                }
                if !seen.insert(s.as_str()) {
                    return bad(format!("stroke {s:?} appears in more than one component"));
                }
            }
        }
        if seen.len() != edge_ids.len() {
            return bad("components do not cover every stroke".into());
        }

        if self.proportions.len() != self.components.len() {
            return bad("one proportion entry per component is required".into());
        }
        for (p, c) in self.proportions.iter().zip(&self.components) {
            let in_unit = |v: f64| v > 0.0 && v <= 1.0;
            if p.component_id != c.component_id || !in_unit(p.scale_ratio) || !p.aspect.iter().all(|a| in_unit(*a)) {
                return bad(format!("proportions for component {} out of range", c.component_id));
            }
        }
        let n = self.components.len() as u32;
        for r in &self.relations {
            if r.subject == r.object || r.subject == 0 || r.object == 0 || r.subject > n || r.object > n {
                return bad(format!("relation {:?} {}→{} is invalid", r.kind, r.subject, r.object));
            }
            if !r.measured.is_finite() {
                return bad("relation measurement not finite".into());
            }
        }
        Ok(())
    }
}

fn check_box(what: &str, b: &OrientedBox) -> Result<(), CompileError> {
    b.check_invariants().map_err(|m| CompileError::MalformedConstraintSet(format!("{what}: {m}")))?;
    if !(b.half_extents[0] >= b.half_extents[1] && b.half_extents[1] >= b.half_extents[2]) {
        return Err(CompileError::MalformedConstraintSet(format!("{what}: half_extents not sorted descending")));
    }
    Ok(())
}

pub fn serialize_constraints(cs: &ConstraintSet) -> Result<Vec<u8>, CompileError> {
    cs.to_canonical_bytes()
}

pub fn parse_constraints(bytes: &[u8]) -> Result<ConstraintSet, CompileError> {
    ConstraintSet::parse(bytes)
}
