//! Small fixed-size vector math shared by the sketch, compiler and validator.
//!
//! World frame is right-handed with +Y up; all lengths are meters.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or free vector) in the world frame.
///
/// Serialized as a compact `[x, y, z]` array.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Point3 = Point3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Point3 = Point3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Point3 = Point3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn distance_squared_to(self, o: Point3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn lerp(self, o: Point3, t: f64) -> Point3 {
        self + (o - self) * t
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        self.into()
    }

    pub fn min_by_component(self, o: Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_by_component(self, o: Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Rotation quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Self {
        let a = axis.normalized().unwrap_or(Point3::Y);
        let (s, c) = (angle * 0.5).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit within `tol` (absolute deviation of the norm from 1).
    pub fn is_unit(&self, tol: f64) -> bool {
        self.is_finite() && (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn rotate(&self, v: Point3) -> Point3 {
        let u = Point3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }
}

/// Transform applied as scale, then rotate, then translate.
pub fn similarity_transform(p: Point3, scale: f64, rotation: &Quaternion, translation: Point3) -> Point3 {
    rotation.rotate(p * scale) + translation
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quarter_turn_about_y_maps_x_to_minus_z() {
        let q = Quaternion::from_axis_angle(Point3::Y, std::f64::consts::FRAC_PI_2);
        let r = q.rotate(Point3::X);
        assert_relative_eq!(r.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.z, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_is_right_handed() {
        assert_eq!(Point3::X.cross(Point3::Y), Point3::Z);
    }

    #[test]
    fn serializes_as_array() {
        let s = serde_json::to_string(&Point3::new(1.0, 2.5, -3.0)).unwrap();
        assert_eq!(s, "[1.0,2.5,-3.0]");
    }
}
