//! Headless engine that compiles collaborative 3D sketches into executable
//! spatial constraints, conditions a generation backend with a composite
//! prompt, and validates the generated mesh against the constraints.
//!
//! Pipeline: [`sketch`] → [`compiler`] → [`prompt`] → [`backend`] → [`validator`].
//! [`session`] hosts the shared editing protocol on top of the same pieces.

pub mod backend;
pub mod canonical;
pub mod compiler;
pub mod corpus;
pub mod distance;
pub mod geometry;
pub mod mesh;
pub mod obb;
pub mod par;
pub mod polyline;
pub mod prompt;
pub mod session;
pub mod sketch;
pub mod union_find;
pub mod validator;

pub use compiler::{compile, CompileError, CompileParams, ConstraintSet};
pub use geometry::{Point3, Quaternion};
pub use obb::{fit_oriented_box, OrientedBox};
pub use par::Parallelism;
pub use sketch::{EditOp, OpKind, Role, SketchDocument, SketchError, Stroke};
pub use backend::{generate, BackendConfig, BackendError, GenerationOutput};
pub use mesh::{export_mesh_obj, load_mesh_obj, TriangleMesh};
pub use prompt::{assemble, GenerationRequest, SemanticPrompt};
pub use validator::{validate, ValidationReport, ValidatorParams};
