//! Small fixed-size geometry used by panels: quadratic Bezier evaluation,
//! unit quaternions and the shoelace area.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Point2 = [f64; 2];
pub type Vec3 = [f64; 3];

/// Tolerance on |q| for a quaternion to count as a rotation.
pub const UNIT_QUATERNION_TOL: f64 = 1e-6;

/// Evaluates the quadratic Bezier curve `(1-t)^2 p0 + 2t(1-t) c + t^2 p1`.
pub fn bezier_point(p0: Point2, control: Point2, p1: Point2, t: f64) -> Result<Point2, GeometryError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::ParameterOutOfRange(t));
    }
    let s = 1.0 - t;
    let (a, b, c) = (s * s, 2.0 * t * s, t * t);
    Ok([
        a * p0[0] + b * control[0] + c * p1[0],
        a * p0[1] + b * control[1] + c * p1[1],
    ])
}

/// Signed polygon area; positive for counterclockwise vertex order.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc
}

/// Quaternion `w + xi + yj + zk`. Serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(v: [f64; 4]) -> Self {
        Quat { w: v[0], x: v[1], y: v[2], z: v[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        q.to_array()
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Rotation by `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Quat { w: c, x: axis[0] * s, y: axis[1] * s, z: axis[2] * s }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_QUATERNION_TOL
    }

    pub fn normalized(self) -> Option<Quat> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n })
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * rhs`; applying the result rotates by `rhs` first.
    pub fn mul(self, rhs: Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    /// Rotates `v` by `q v q^-1`, without checking that `self` is a unit quaternion.
    pub fn rotate_unchecked(self, v: Vec3) -> Vec3 {
        // v' = v + 2 r x (r x v + w v), r = (x, y, z)
        let r = [self.x, self.y, self.z];
        let t = cross(r, v);
        let t = [t[0] + self.w * v[0], t[1] + self.w * v[1], t[2] + self.w * v[2]];
        let u = cross(r, t);
        [v[0] + 2.0 * u[0], v[1] + 2.0 * u[1], v[2] + 2.0 * u[2]]
    }

    /// Rotates `v`; fails unless `|q| = 1` within [`UNIT_QUATERNION_TOL`].
    pub fn rotate(self, v: Vec3) -> Result<Vec3, GeometryError> {
        if !self.is_unit() {
            return Err(GeometryError::NonUnitQuaternion(self.norm()));
        }
        Ok(self.rotate_unchecked(v))
    }
}

/// Free-function form of [`Quat::rotate`].
pub fn rotate_by_quaternion(q: Quat, v: Vec3) -> Result<Vec3, GeometryError> {
    q.rotate(v)
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn dist3(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot3(d, d).sqrt()
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
