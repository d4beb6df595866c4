//! Oriented bounding boxes fitted by principal component analysis.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

/// Multiplier applied to fitted half-extents.
pub const BOX_PADDING: f64 = 1.02;
/// Smallest half-extent a fitted box may have, in meters.
pub const MIN_HALF_EXTENT: f64 = 0.001;
/// Eigenvalues closer than this (relative to the largest) are treated as tied.
pub const EIGEN_TIE_RELATIVE: f64 = 1e-9;
/// Orthonormality tolerance for box axes.
pub const AXIS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoxFitError {
    #[error("EmptyPointSet: cannot fit a box to zero points")]
    EmptyPointSet,
    #[error("NonFinitePoint: point set contains NaN or infinite coordinates")]
    NonFinitePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3,
    /// Orthonormal, right-handed, ordered to match `half_extents`.
    pub axes: [Point3; 3],
    /// Sorted descending.
    pub half_extents: [f64; 3],
}

impl OrientedBox {
    pub fn world_aligned(center: Point3, half_extents: [f64; 3]) -> Self {
        Self { center, axes: [Point3::X, Point3::Y, Point3::Z], half_extents }
    }

    /// Coordinates of `p` in the box frame.
    pub fn to_local(&self, p: Point3) -> Point3 {
        let d = p - self.center;
        Point3::new(d.dot(self.axes[0]), d.dot(self.axes[1]), d.dot(self.axes[2]))
    }

    pub fn to_world(&self, local: Point3) -> Point3 {
        self.center + self.axes[0] * local.x + self.axes[1] * local.y + self.axes[2] * local.z
    }

    /// Containment with an absolute slack added to every half-extent.
    pub fn contains_with_slack(&self, p: Point3, slack: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l.component(i).abs() <= self.half_extents[i] + slack)
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.contains_with_slack(p, 1e-9)
    }

    /// Same frame with every half-extent multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> OrientedBox {
        OrientedBox {
            center: self.center,
            axes: self.axes,
            half_extents: self.half_extents.map(|h| h * factor),
        }
    }

    pub fn full_extents(&self) -> [f64; 3] {
        self.half_extents.map(|h| 2.0 * h)
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents[0] * self.half_extents[1] * self.half_extents[2]
    }

    /// Length of the box's space diagonal.
    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [Point3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.to_world(Point3::new(
                sx * self.half_extents[0],
                sy * self.half_extents[1],
                sz * self.half_extents[2],
            ));
        }
        out
    }

    /// World-axis-aligned bounds of the corners: (min, max).
    pub fn world_bounds(&self) -> (Point3, Point3) {
        let c = self.corners();
        c.iter().fold((c[0], c[0]), |(lo, hi), p| (lo.min_by_component(*p), hi.max_by_component(*p)))
    }

    /// Checks the type invariants; returns a description of the first breach.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.center.is_finite() {
            return Err("box center not finite".into());
        }
        for (i, h) in self.half_extents.iter().enumerate() {
            if !(*h >= MIN_HALF_EXTENT * (1.0 - 1e-12)) || !h.is_finite() {
                return Err(format!("half_extent[{i}] = {h} below the {MIN_HALF_EXTENT} m floor"));
            }
        }
        for i in 0..3 {
            if !self.axes[i].is_finite() || (self.axes[i].norm() - 1.0).abs() > AXIS_TOLERANCE {
                return Err(format!("axis {i} is not unit length"));
            }
            for j in i + 1..3 {
                if self.axes[i].dot(self.axes[j]).abs() > AXIS_TOLERANCE {
                    return Err(format!("axes {i} and {j} are not orthogonal"));
                }
            }
        }
        if self.axes[0].cross(self.axes[1]).dot(self.axes[2]) < 1.0 - AXIS_TOLERANCE {
            return Err("axes are not right-handed".into());
        }
        Ok(())
    }
}

/// Flip `v` so that its largest-magnitude entry is positive.
fn canonical_sign(v: Point3) -> Point3 {
    let a = v.to_array();
    let mut idx = 0;
    for i in 1..3 {
        if a[i].abs() > a[idx].abs() {
            idx = i;
        }
    }
    if a[idx] < 0.0 {
        -v
    } else {
        v
    }
}

/// Unit vector orthogonal to `a`, built from the world axis least aligned with it.
fn orthogonal_to(a: Point3) -> Point3 {
    let world = [Point3::X, Point3::Y, Point3::Z];
    let mut best = world[0];
    for w in &world[1..] {
        if w.dot(a).abs() < best.dot(a).abs() {
            best = *w;
        }
    }
    (best - a * best.dot(a)).normalized().unwrap_or(Point3::Y)
}

/// Right-handed frame from two (approximately orthonormal) leading axes.
fn complete_frame(first: Point3, second: Point3) -> [Point3; 3] {
    let a0 = canonical_sign(first);
    let s = second - a0 * second.dot(a0);
    let a1 = canonical_sign(s.normalized().unwrap_or_else(|| orthogonal_to(a0)));
    let a2 = a0.cross(a1);
    [a0, a1, a2]
}

fn eigen_tied(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= EIGEN_TIE_RELATIVE * scale
}

/// Principal frame of the covariance, with ambiguous directions resolved
/// deterministically. `None` when all three eigenvalues tie.
fn principal_frame(points: &[Point3], centroid: Point3) -> Option<[Point3; 3]> {
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p.to_array();
        let c = centroid.to_array();
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (d[i] - c[i]) * (d[j] - c[j]);
            }
        }
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| {
        let c = eig.eigenvectors.column(i);
        Point3::new(c[0], c[1], c[2])
    });
    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    let tie01 = eigen_tied(vals[0], vals[1], scale);
    let tie12 = eigen_tied(vals[1], vals[2], scale);
    match (tie01, tie12) {
        (true, true) => None,
        // Line-like: only the leading direction is determined.
        (false, true) => {
            let a0 = canonical_sign(vecs[0]);
            Some(complete_frame(a0, orthogonal_to(a0)))
        }
        // Disc-like: only the normal is determined.
        (true, false) => {
            let n = canonical_sign(vecs[2]);
            let a0 = canonical_sign(orthogonal_to(n));
            let a1 = n.cross(a0);
            Some(complete_frame(a0, a1))
        }
        (false, false) => Some(complete_frame(vecs[0], vecs[1])),
    }
}

/// Tight box in a fixed frame: (center, raw half-extents).
fn box_in_frame(points: &[Point3], axes: &[Point3; 3]) -> (Point3, [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for i in 0..3 {
            let t = p.dot(axes[i]);
            lo[i] = lo[i].min(t);
            hi[i] = hi[i].max(t);
        }
    }
    let mut center = Point3::ZERO;
    let mut half = [0.0; 3];
    for i in 0..3 {
        center += axes[i] * (0.5 * (lo[i] + hi[i]));
        half[i] = 0.5 * (hi[i] - lo[i]);
    }
    (center, half)
}

fn finalize(center: Point3, axes: [Point3; 3], raw_half: [f64; 3]) -> OrientedBox {
    let padded = raw_half.map(|h| (h * BOX_PADDING).max(MIN_HALF_EXTENT));
    let mut order = [0usize, 1, 2];
    // Stable, so equal extents keep their frame order.
    order.sort_by(|&a, &b| padded[b].total_cmp(&padded[a]));
    let half_extents = order.map(|i| padded[i]);
    let sorted_axes = order.map(|i| axes[i]);
    let [a0, a1, _] = sorted_axes;
    let a0 = canonical_sign(a0);
    let a1 = canonical_sign(a1);
    OrientedBox { center, axes: [a0, a1, a0.cross(a1)], half_extents }
}

fn padded_volume(raw_half: &[f64; 3]) -> f64 {
    raw_half.iter().map(|h| (h * BOX_PADDING).max(MIN_HALF_EXTENT)).product::<f64>() * 8.0
}

/// Fit an oriented box around `points`.
///
/// The principal-axis box and the world-aligned box are both computed and
/// the smaller one (by padded volume) is kept; ties go to the world-aligned
/// box. Half-extents are padded by [`BOX_PADDING`] and floored at
/// [`MIN_HALF_EXTENT`].
pub fn fit_oriented_box(points: &[Point3]) -> Result<OrientedBox, BoxFitError> {
    if points.is_empty() {
        return Err(BoxFitError::EmptyPointSet);
    }
    if !points.iter().all(Point3::is_finite) {
        return Err(BoxFitError::NonFinitePoint);
    }
    let centroid = points.iter().fold(Point3::ZERO, |acc, p| acc + *p) / points.len() as f64;

    let world_axes = [Point3::X, Point3::Y, Point3::Z];
    let (world_center, world_half) = box_in_frame(points, &world_axes);
    let mut best = (world_center, world_axes, world_half);

    if let Some(axes) = principal_frame(points, centroid) {
        let (center, half) = box_in_frame(points, &axes);
        if padded_volume(&half) < padded_volume(&world_half) {
            best = (center, axes, half);
        }
    }
    Ok(finalize(best.0, best.1, best.2))
}
