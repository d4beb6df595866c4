//! Sketch documents: authored strokes, edit operations and the op log.
//!
//! A [`SketchDocument`] is an immutable-by-convention value. Every change is an
//! [`EditOp`]; the applied ops are kept in `op_log`, and replaying that log
//! from an empty document reproduces the document byte-for-byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::geometry::{similarity_transform, Point3, Quaternion};
use crate::polyline::{self, PolylineError};

pub const SCHEMA_VERSION: u32 = 1;

/// Allowed deviation of a rotation quaternion's norm from 1.
pub const QUATERNION_UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SketchError {
    #[error("UnknownStroke: no stroke with id {0:?}")]
    UnknownStroke(String),
    #[error("DuplicateStrokeId: stroke id {0:?} already exists")]
    DuplicateStrokeId(String),
    #[error("DegenerateStroke: stroke {0:?} needs at least two points and non-zero length")]
    DegenerateStroke(String),
    #[error("NonFiniteCoordinate: coordinate is NaN or infinite")]
    NonFiniteCoordinate,
    #[error("NonPositiveScale: scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("NonUnitRotation: rotation quaternion norm deviates from 1 by more than 1e-6")]
    NonUnitRotation,
    #[error("NonPositiveSpacing: spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("NonPositiveLength: calibration lengths must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
}

impl SketchError {
    /// Short machine-readable name, used as the rejection reason on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            SketchError::UnknownStroke(_) => "UnknownStroke",
            SketchError::DuplicateStrokeId(_) => "DuplicateStrokeId",
            SketchError::DegenerateStroke(_) => "DegenerateStroke",
            SketchError::NonFiniteCoordinate => "NonFiniteCoordinate",
            SketchError::NonPositiveScale(_) => "NonPositiveScale",
            SketchError::NonUnitRotation => "NonUnitRotation",
            SketchError::NonPositiveSpacing(_) => "NonPositiveSpacing",
            SketchError::NonPositiveLength(_) => "NonPositiveLength",
            SketchError::MalformedDocument(_) => "MalformedDocument",
        }
    }
}

/// Structural role of a stroke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Primary outline or critical transition.
    #[default]
    Contour,
    /// Large-scale volumetric framework.
    Scaffold,
    /// Anchor for a local shape or functional part.
    Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub stroke_id: String,
    pub author_id: String,
    #[serde(default)]
    pub role: Role,
    pub points: Vec<Point3>,
    pub created_at: i64,
    pub color_index: u32,
}

impl Stroke {
    pub fn new(stroke_id: impl Into<String>, author_id: impl Into<String>, points: Vec<Point3>) -> Self {
        Self {
            stroke_id: stroke_id.into(),
            author_id: author_id.into(),
            role: Role::Contour,
            points,
            created_at: 0,
            color_index: 0,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn length(&self) -> f64 {
        polyline::polyline_length(&self.points)
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        if self.stroke_id.is_empty() {
            return Err(SketchError::MalformedDocument("empty stroke_id".into()));
        }
        if !self.points.iter().all(Point3::is_finite) {
            return Err(SketchError::NonFiniteCoordinate);
        }
        let length = self.length();
        if self.points.len() < 2 || !(length > 0.0) {
            return Err(SketchError::DegenerateStroke(self.stroke_id.clone()));
        }
        if !length.is_finite() {
            return Err(SketchError::NonFiniteCoordinate);
        }
        Ok(())
    }
}

/// Points at uniform arc-length intervals along the stroke.
pub fn resample_stroke(stroke: &Stroke, spacing: f64) -> Result<Vec<Point3>, SketchError> {
    polyline::resample(&stroke.points, spacing).map_err(|e| match e {
        PolylineError::NonPositiveSpacing(s) => SketchError::NonPositiveSpacing(s),
        PolylineError::Degenerate => SketchError::DegenerateStroke(stroke.stroke_id.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpKind {
    AddStroke {
        stroke: Stroke,
    },
    DeleteStroke {
        stroke_id: String,
    },
    TransformStroke {
        stroke_id: String,
        rotation: Quaternion,
        translation: Point3,
        uniform_scale: f64,
    },
    SetRole {
        stroke_id: String,
        role: Role,
    },
    SetCalibration {
        scale: f64,
    },
}

impl OpKind {
    /// Check the per-op invariants that do not depend on document state.
    pub fn validate(&self) -> Result<(), SketchError> {
        match self {
            OpKind::AddStroke { stroke } => stroke.validate(),
            OpKind::DeleteStroke { .. } | OpKind::SetRole { .. } => Ok(()),
            OpKind::TransformStroke { rotation, translation, uniform_scale, .. } => {
                if !translation.is_finite() {
                    return Err(SketchError::NonFiniteCoordinate);
                }
                if !(*uniform_scale > 0.0) || !uniform_scale.is_finite() {
                    return Err(SketchError::NonPositiveScale(*uniform_scale));
                }
                if !rotation.is_unit(QUATERNION_UNIT_TOLERANCE) {
                    return Err(SketchError::NonUnitRotation);
                }
                Ok(())
            }
            OpKind::SetCalibration { scale } => {
                if *scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(SketchError::NonPositiveScale(*scale))
                }
            }
        }
    }

    /// The stroke this op targets, if any.
    pub fn target_stroke(&self) -> Option<&str> {
        match self {
            OpKind::AddStroke { stroke } => Some(&stroke.stroke_id),
            OpKind::DeleteStroke { stroke_id }
            | OpKind::TransformStroke { stroke_id, .. }
            | OpKind::SetRole { stroke_id, .. } => Some(stroke_id),
            OpKind::SetCalibration { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    pub op_id: String,
    pub author_id: String,
    pub kind: OpKind,
    /// Server-assigned position in the session order; absent until acknowledged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl EditOp {
    pub fn new(op_id: impl Into<String>, author_id: impl Into<String>, kind: OpKind) -> Self {
        Self { op_id: op_id.into(), author_id: author_id.into(), kind, seq: None }
    }
}

/// Calibration op from a reference measurement: the sketch measured
/// `measured_length` where the real object is `actual_length` long.
pub fn calibrate(measured_length: f64, actual_length: f64) -> Result<OpKind, SketchError> {
    for len in [measured_length, actual_length] {
        if !(len > 0.0) || !len.is_finite() {
            return Err(SketchError::NonPositiveLength(len));
        }
    }
    Ok(OpKind::SetCalibration { scale: actual_length / measured_length })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchDocument {
    pub doc_id: String,
    pub schema_version: u32,
    /// Multiplier applied to raw coordinates at compile time only.
    pub calibration_scale: f64,
    pub strokes: BTreeMap<String, Stroke>,
    pub revision: u64,
    pub op_log: Vec<EditOp>,
}

/// On-disk shape; strokes are a list sorted by id.
#[derive(Serialize, Deserialize)]
struct DocumentRepr {
    calibration_scale: f64,
    doc_id: String,
    op_log: Vec<EditOp>,
    revision: u64,
    schema_version: u32,
    strokes: Vec<Stroke>,
}

impl SketchDocument {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            schema_version: SCHEMA_VERSION,
            calibration_scale: 1.0,
            strokes: BTreeMap::new(),
            revision: 0,
            op_log: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn stroke(&self, id: &str) -> Option<&Stroke> {
        self.strokes.get(id)
    }

    /// Apply `op` to a copy of this document.
    pub fn apply(&self, op: &EditOp) -> Result<SketchDocument, SketchError> {
        let mut next = self.clone();
        next.apply_in_place(op)?;
        Ok(next)
    }

    /// Apply `op` to this document. On error the document is left untouched.
    pub fn apply_in_place(&mut self, op: &EditOp) -> Result<(), SketchError> {
        op.kind.validate()?;
        match &op.kind {
            OpKind::AddStroke { stroke } => {
                if self.strokes.contains_key(&stroke.stroke_id) {
                    return Err(SketchError::DuplicateStrokeId(stroke.stroke_id.clone()));
                }
                self.strokes.insert(stroke.stroke_id.clone(), stroke.clone());
            }
            OpKind::DeleteStroke { stroke_id } => {
                if self.strokes.remove(stroke_id).is_none() {
                    return Err(SketchError::UnknownStroke(stroke_id.clone()));
                }
            }
            OpKind::TransformStroke { stroke_id, rotation, translation, uniform_scale } => {
                let stroke = self
                    .strokes
                    .get(stroke_id)
                    .ok_or_else(|| SketchError::UnknownStroke(stroke_id.clone()))?;
                let mut moved = stroke.clone();
                for p in &mut moved.points {
                    *p = similarity_transform(*p, *uniform_scale, rotation, *translation);
                }
                moved.validate()?;
                self.strokes.insert(stroke_id.clone(), moved);
            }
            OpKind::SetRole { stroke_id, role } => {
                let stroke = self
                    .strokes
                    .get_mut(stroke_id)
                    .ok_or_else(|| SketchError::UnknownStroke(stroke_id.clone()))?;
                stroke.role = *role;
            }
            OpKind::SetCalibration { scale } => {
                self.calibration_scale = *scale;
            }
        }
        self.revision += 1;
        self.op_log.push(op.clone());
        Ok(())
    }

    /// Rebuild a document by applying `ops` to an empty document.
    pub fn replay<'a>(
        doc_id: &str,
        ops: impl IntoIterator<Item = &'a EditOp>,
    ) -> Result<SketchDocument, SketchError> {
        let mut doc = SketchDocument::new(doc_id);
        for op in ops {
            doc.apply_in_place(op)?;
        }
        Ok(doc)
    }

    /// Replay this document's own op log from scratch.
    pub fn replayed(&self) -> Result<SketchDocument, SketchError> {
        SketchDocument::replay(&self.doc_id, &self.op_log)
    }

    /// Structural invariants checked on parse. Replay equivalence is not
    /// checked here; see [`SketchDocument::replayed`].
    pub fn validate(&self) -> Result<(), SketchError> {
        let malformed = |m: String| Err(SketchError::MalformedDocument(m));
        if self.schema_version != SCHEMA_VERSION {
            return malformed(format!("unsupported schema_version {}", self.schema_version));
        }
        if !(self.calibration_scale > 0.0) || !self.calibration_scale.is_finite() {
            return malformed(format!("calibration_scale {} not positive", self.calibration_scale));
        }
        if self.revision != self.op_log.len() as u64 {
            return malformed(format!(
                "revision {} does not match op_log length {}",
                self.revision,
                self.op_log.len()
            ));
        }
        for (id, stroke) in &self.strokes {
            if id != &stroke.stroke_id {
                return malformed(format!("stroke key {id:?} differs from stroke_id"));
            }
            stroke.validate().map_err(|e| SketchError::MalformedDocument(e.to_string()))?;
        }
        for op in &self.op_log {
            op.kind.validate().map_err(|e| SketchError::MalformedDocument(format!("op {}: {e}", op.op_id)))?;
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, SketchError> {
        let repr = DocumentRepr {
            calibration_scale: self.calibration_scale,
            doc_id: self.doc_id.clone(),
            op_log: self.op_log.clone(),
            revision: self.revision,
            schema_version: self.schema_version,
            strokes: self.strokes.values().cloned().collect(),
        };
        if !self.strokes.values().all(|s| s.points.iter().all(Point3::is_finite)) {
            return Err(SketchError::NonFiniteCoordinate);
        }
        canonical::to_canonical_bytes(&repr).map_err(|e| SketchError::MalformedDocument(e.to_string()))
    }

    pub fn parse(bytes: &[u8]) -> Result<SketchDocument, SketchError> {
        let repr: DocumentRepr = canonical::from_json_bytes(bytes)
            .map_err(|e| SketchError::MalformedDocument(e.to_string()))?;
        let mut strokes = BTreeMap::new();
        for stroke in repr.strokes {
            let id = stroke.stroke_id.clone();
            if strokes.insert(id.clone(), stroke).is_some() {
                return Err(SketchError::MalformedDocument(format!("duplicate stroke id {id:?}")));
            }
        }
        let doc = SketchDocument {
            doc_id: repr.doc_id,
            schema_version: repr.schema_version,
            calibration_scale: repr.calibration_scale,
            strokes,
            revision: repr.revision,
            op_log: repr.op_log,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// SHA-256 of the canonical bytes, lowercase hex.
    pub fn digest(&self) -> Result<String, SketchError> {
        Ok(canonical::sha256_hex(&self.to_canonical_bytes()?))
    }
}

/// Free-function form of [`SketchDocument::apply`].
pub fn apply_op(doc: &SketchDocument, op: &EditOp) -> Result<SketchDocument, SketchError> {
    doc.apply(op)
}

pub fn canonical_serialize(doc: &SketchDocument) -> Result<Vec<u8>, SketchError> {
    doc.to_canonical_bytes()
}

pub fn document_digest(doc: &SketchDocument) -> Result<String, SketchError> {
    doc.digest()
}
