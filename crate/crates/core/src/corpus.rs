//! Seeded random inputs: sketches, edit histories, point clouds and meshes.
//!
//! Used by property tests, benchmarks and the acceptance suite. Every
//! generator is a pure function of its RNG state.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point3, Quaternion};
use crate::mesh::TriangleMesh;
use crate::sketch::{EditOp, OpKind, Role, SketchDocument, Stroke};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Point3 {
    loop {
        let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = p.norm();
        if n > 1e-3 && n <= 1.0 {
            return p / n;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Quaternion {
    Quaternion::from_axis_angle(unit_vector(rng), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

pub fn point_in_cube(rng: &mut impl Rng, half: f64) -> Point3 {
    Point3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

/// Random walk of `n` points with steps between 2% and 30% of `extent`.
pub fn random_walk(rng: &mut impl Rng, start: Point3, n: usize, extent: f64) -> Vec<Point3> {
    let mut pts = vec![start];
    while pts.len() < n {
        let step = unit_vector(rng) * (extent * rng.random_range(0.02..0.3));
        pts.push(*pts.last().unwrap() + step);
    }
    pts
}

fn random_role(rng: &mut impl Rng) -> Role {
    *[Role::Contour, Role::Contour, Role::Scaffold, Role::Anchor].choose(rng).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct SketchShape {
    pub max_strokes: usize,
    pub max_points: usize,
    /// Side of the cube the strokes start in, meters.
    pub extent: f64,
    /// Probability that a new stroke starts at an existing endpoint.
    pub connect_probability: f64,
}

impl Default for SketchShape {
    fn default() -> Self {
        Self { max_strokes: 12, max_points: 16, extent: 1.0, connect_probability: 0.5 }
    }
}

/// A stroke starting near an existing endpoint (exactly on it, or within
/// 4 mm) or anywhere in the cube.
pub fn random_stroke(
    rng: &mut impl Rng,
    id: &str,
    author: &str,
    existing: &[&Stroke],
    shape: &SketchShape,
) -> Stroke {
    let extent = shape.extent * rng.random_range(0.2..1.0);
    let start = if !existing.is_empty() && rng.random_bool(shape.connect_probability) {
        let s = existing.choose(rng).unwrap();
        let p = if rng.random_bool(0.5) { s.points[0] } else { *s.points.last().unwrap() };
        if rng.random_bool(0.5) { p } else { p + unit_vector(rng) * rng.random_range(0.0..0.004) }
    } else {
        point_in_cube(rng, shape.extent / 2.0)
    };
    let n = rng.random_range(2..=shape.max_points.max(2));
    Stroke {
        stroke_id: id.to_string(),
        author_id: author.to_string(),
        role: random_role(rng),
        points: random_walk(rng, start, n, extent),
        created_at: 0,
        color_index: 0,
    }
}

/// Ops that only add strokes.
pub fn random_strokes(rng: &mut impl Rng, shape: &SketchShape) -> Vec<Stroke> {
    let n = rng.random_range(1..=shape.max_strokes.max(1));
    let mut out: Vec<Stroke> = Vec::with_capacity(n);
    for i in 0..n {
        let existing: Vec<&Stroke> = out.iter().collect();
        let s = random_stroke(rng, &format!("s{i:03}"), "author", &existing, shape);
        out.push(s);
    }
    out
}

pub fn document_from_strokes(doc_id: &str, strokes: Vec<Stroke>) -> SketchDocument {
    let ops: Vec<EditOp> = strokes
        .into_iter()
        .enumerate()
        .map(|(i, s)| EditOp::new(format!("op{i:04}"), s.author_id.clone(), OpKind::AddStroke { stroke: s }))
        .collect();
    SketchDocument::replay(doc_id, &ops).expect("generated strokes are valid")
}

/// A document made only of stroke additions.
pub fn random_sketch(rng: &mut impl Rng, shape: &SketchShape) -> SketchDocument {
    let strokes = random_strokes(rng, shape);
    document_from_strokes("doc", strokes)
}

/// A valid edit history: additions, transforms, role changes, deletions and
/// calibration. Ops target only live strokes, and the final document has at
/// least one stroke.
pub fn random_history(rng: &mut impl Rng, n_ops: usize, shape: &SketchShape) -> Vec<EditOp> {
    let mut doc = SketchDocument::new("doc");
    let mut ops = Vec::with_capacity(n_ops + 1);
    let mut next_id = 0usize;
    for i in 0..n_ops {
        let live: Vec<String> = doc.strokes.keys().cloned().collect();
        let roll: f64 = rng.random();
        let author = format!("u{}", rng.random_range(0..3));
        let kind = if live.is_empty() || roll < 0.45 {
            let existing: Vec<&Stroke> = doc.strokes.values().collect();
            let s = random_stroke(rng, &format!("s{next_id:04}"), &author, &existing, shape);
            next_id += 1;
            OpKind::AddStroke { stroke: s }
        } else if roll < 0.65 {
            OpKind::TransformStroke {
                stroke_id: live.choose(rng).unwrap().clone(),
                rotation: random_rotation(rng),
                translation: point_in_cube(rng, 0.2),
                uniform_scale: rng.random_range(0.5..2.0),
            }
        } else if roll < 0.78 {
            OpKind::SetRole { stroke_id: live.choose(rng).unwrap().clone(), role: random_role(rng) }
        } else if roll < 0.95 {
            OpKind::DeleteStroke { stroke_id: live.choose(rng).unwrap().clone() }
        } else {
            OpKind::SetCalibration { scale: rng.random_range(0.5..2.0) }
        };
        let op = EditOp::new(format!("op{i:04}"), author, kind);
        doc.apply_in_place(&op).expect("generated op is valid");
        ops.push(op);
    }
    if doc.strokes.is_empty() {
        let s = random_stroke(rng, &format!("s{next_id:04}"), "u0", &[], shape);
        ops.push(EditOp::new(format!("op{n_ops:04}"), "u0", OpKind::AddStroke { stroke: s }));
    }
    ops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudKind {
    General,
    Collinear,
    Coplanar,
}

/// `n` points of the given kind, randomly placed and oriented.
pub fn random_cloud(rng: &mut impl Rng, n: usize, kind: CloudKind) -> Vec<Point3> {
    let center = point_in_cube(rng, 2.0);
    let q = random_rotation(rng);
    let s = [rng.random_range(0.05..2.0), rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
    (0..n)
        .map(|_| {
            let mut p = Point3::new(
                rng.random_range(-s[0]..s[0]),
                rng.random_range(-s[1]..s[1]),
                rng.random_range(-s[2]..s[2]),
            );
            match kind {
                CloudKind::General => {}
                CloudKind::Collinear => {
                    p.y = 0.0;
                    p.z = 0.0;
                }
                CloudKind::Coplanar => p.z = 0.0,
            }
            q.rotate(p) + center
        })
        .collect()
}

/// Random vertices and triangles over them.
pub fn random_mesh(rng: &mut impl Rng, n_vertices: usize, n_triangles: usize, half: f64) -> TriangleMesh {
    let vertices = (0..n_vertices.max(1)).map(|_| point_in_cube(rng, half)).collect::<Vec<_>>();
    let nv = vertices.len() as u32;
    let triangles = (0..n_triangles).map(|_| [0; 3].map(|_: u32| rng.random_range(0..nv))).collect();
    TriangleMesh { vertices, triangles }
}
