//! Spatial organization cues between components: Above, Contains, Adjacent.
//!
//! The same rules run in the compiler (on stroke samples) and in the
//! validator (on mesh vertices assigned to components).

use serde::{Deserialize, Serialize};

use crate::distance::min_set_distance;
use crate::geometry::Point3;
use crate::obb::OrientedBox;

/// Vertical slack for Above: A's bottom may sit this far below B's top.
pub const ABOVE_GAP_TOLERANCE: f64 = 0.02;
/// Minimum XZ footprint overlap for Above, as a fraction of the smaller footprint.
pub const ABOVE_MIN_FOOTPRINT_OVERLAP: f64 = 0.25;
/// Fraction of B's samples that must fall inside A's box for Contains(A, B).
pub const CONTAINS_MIN_FRACTION: f64 = 0.95;
/// Largest sample-to-sample gap for Adjacent.
pub const ADJACENT_MAX_DISTANCE: f64 = 0.02;
/// Box centers closer than this in y count as level.
const CENTER_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Above,
    Contains,
    Adjacent,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Contains => "contains",
            RelationKind::Adjacent => "adjacent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub kind: RelationKind,
    pub subject: u32,
    pub object: u32,
    /// Above: vertical gap in meters (subject bottom minus object top).
    /// Contains: fraction of object samples inside the subject box.
    /// Adjacent: closest sample distance in meters.
    pub measured: f64,
}

impl SpatialRelation {
    pub fn key(&self) -> (RelationKind, u32, u32) {
        (self.kind, self.subject, self.object)
    }
}

/// Geometry of one component as seen by the relation rules.
#[derive(Debug, Clone, Copy)]
pub struct ComponentGeometry<'a> {
    pub id: u32,
    pub bbox: &'a OrientedBox,
    pub points: &'a [Point3],
}

struct Footprint {
    lo_x: f64,
    hi_x: f64,
    lo_z: f64,
    hi_z: f64,
    lo_y: f64,
    hi_y: f64,
}

impl Footprint {
    fn of(b: &OrientedBox) -> Self {
        let (lo, hi) = b.world_bounds();
        Footprint { lo_x: lo.x, hi_x: hi.x, lo_z: lo.z, hi_z: hi.z, lo_y: lo.y, hi_y: hi.y }
    }

    fn area(&self) -> f64 {
        (self.hi_x - self.lo_x) * (self.hi_z - self.lo_z)
    }

    fn overlap_area(&self, o: &Footprint) -> f64 {
        let dx = (self.hi_x.min(o.hi_x) - self.lo_x.max(o.lo_x)).max(0.0);
        let dz = (self.hi_z.min(o.hi_z) - self.lo_z.max(o.lo_z)).max(0.0);
        dx * dz
    }
}

fn above(a: &ComponentGeometry, fa: &Footprint, b: &ComponentGeometry, fb: &Footprint) -> Option<f64> {
    let gap = fa.lo_y - fb.hi_y;
    if gap < -ABOVE_GAP_TOLERANCE {
        return None;
    }
    // Keeps Above antisymmetric when both boxes are thin and nearly level.
    if !(a.bbox.center.y > b.bbox.center.y + CENTER_TIE_TOLERANCE) {
        return None;
    }
    let smaller = fa.area().min(fb.area());
    if !(smaller > 0.0) {
        return None;
    }
    if fa.overlap_area(fb) / smaller >= ABOVE_MIN_FOOTPRINT_OVERLAP {
        Some(gap)
    } else {
        None
    }
}

fn contained_fraction(container: &OrientedBox, points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().filter(|p| container.contains(**p)).count() as f64 / points.len() as f64
}

/// All relations among `geoms`, ordered by kind, then subject, then object.
pub fn relations_between(geoms: &[ComponentGeometry]) -> Vec<SpatialRelation> {
    let footprints: Vec<Footprint> = geoms.iter().map(|g| Footprint::of(g.bbox)).collect();
    let n = geoms.len();
    let mut contains = vec![vec![None::<f64>; n]; n];
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some(gap) = above(&geoms[i], &footprints[i], &geoms[j], &footprints[j]) {
                out.push(SpatialRelation {
                    kind: RelationKind::Above,
                    subject: geoms[i].id,
                    object: geoms[j].id,
                    measured: gap,
                });
            }
            let frac = contained_fraction(geoms[i].bbox, geoms[j].points);
            if frac >= CONTAINS_MIN_FRACTION {
                contains[i][j] = Some(frac);
                out.push(SpatialRelation {
                    kind: RelationKind::Contains,
                    subject: geoms[i].id,
                    object: geoms[j].id,
                    measured: frac,
                });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if contains[i][j].is_some() || contains[j][i].is_some() {
                continue;
            }
            let Some(d) = min_set_distance(geoms[i].points, geoms[j].points) else {
                continue;
            };
            if d <= ADJACENT_MAX_DISTANCE {
                let (s, o) = if geoms[i].id < geoms[j].id {
                    (geoms[i].id, geoms[j].id)
                } else {
                    (geoms[j].id, geoms[i].id)
                };
                out.push(SpatialRelation { kind: RelationKind::Adjacent, subject: s, object: o, measured: d });
            }
        }
    }
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    out
}
