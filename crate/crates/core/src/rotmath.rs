//! Vectors and unit quaternions.
//!
//! Conventions used throughout the crate:
//!
//! * Hamilton product, scalar-first storage `(w, x, y, z)`, right-handed frames.
//! * An orientation `q` maps body-frame vectors into the world frame:
//!   `v_world = q * v_body * q⁻¹` (see [`UnitQuaternion::rotate_vector`]).
//! * `a * b` applies `b` first, then `a`. Left-multiplying an orientation by
//!   a rotation therefore rotates it in the world frame, right-multiplying
//!   rotates it in its own body frame.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RotError {
    #[error("rotation axis has zero length but angle is {0} rad")]
    DegenerateAxis(f64),
    #[error("quaternion components have zero norm")]
    ZeroNorm,
    #[error("non-finite component in input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        (self.x - o.x)
            .abs()
            .max((self.y - o.y).abs())
            .max((self.z - o.z).abs())
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A rotation stored as a normalized Hamilton quaternion.
///
/// The fields are private so the unit-norm invariant cannot be broken from
/// outside; every constructor and product renormalizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = RotError;
    fn try_from(c: [f64; 4]) -> Result<Self, RotError> {
        UnitQuaternion::from_components(c[0], c[1], c[2], c[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)` into a unit quaternion.
    pub fn from_components(w: f64, x: f64, y: f64, z: f64) -> Result<Self, RotError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(RotError::NonFinite);
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 {
            return Err(RotError::ZeroNorm);
        }
        Ok(UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    ///
    /// A zero angle yields the identity for any axis, including the zero
    /// vector.
    pub fn from_axis_angle(angle: f64, axis: Vec3) -> Result<Self, RotError> {
        if !angle.is_finite() || !axis.is_finite() {
            return Err(RotError::NonFinite);
        }
        if angle == 0.0 {
            return Ok(Self::IDENTITY);
        }
        let unit = axis.normalized().ok_or(RotError::DegenerateAxis(angle))?;
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::renormalized(c, unit.x * s, unit.y * s, unit.z * s))
    }

    /// Exponential map: rotation by `‖v‖` radians about `v`. Zero maps to
    /// the identity.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 || !angle.is_finite() {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / angle;
        Self::renormalized(c, v.x * k, v.y * k, v.z * k)
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, o: &UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// The same rotation with all components negated.
    pub fn negated(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn inverse(&self) -> Self {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self * other`, renormalized.
    pub fn compose(&self, o: &UnitQuaternion) -> Self {
        let (a, b) = (self, o);
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// `q * (0, v) * q⁻¹`, evaluated without forming the intermediate
    /// quaternions.
    pub fn rotate_vector(&self, v: Vec3) -> Vec3 {
        let u = self.vector_part();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(t)
    }

    /// `q⁻¹ * (0, v) * q`.
    pub fn inverse_rotate_vector(&self, v: Vec3) -> Vec3 {
        self.inverse().rotate_vector(v)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let s = self.vector_part().norm();
        2.0 * s.atan2(self.w.abs())
    }

    /// Axis and angle with the angle in `[0, π]`. The identity reports the
    /// x axis.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        let q = if self.w < 0.0 { self.negated() } else { *self };
        let v = q.vector_part();
        match v.normalized() {
            Some(axis) => (axis, 2.0 * v.norm().atan2(q.w)),
            None => (Vec3::X, 0.0),
        }
    }

    /// Rotation vector (log map), angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let (axis, angle) = self.axis_angle();
        axis * angle
    }

    /// Angle of the relative rotation `a⁻¹ b`, in `[0, π]`. Invariant to the
    /// sign of either quaternion.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        rotation_angle_between(self, other)
    }

    /// Signed angle of the twist component of this rotation about `axis`
    /// (swing-twist decomposition), in `(-π, π]`.
    pub fn twist_angle(&self, axis: Vec3) -> f64 {
        let Some(n) = axis.normalized() else {
            return 0.0;
        };
        let p = self.vector_part().dot(n);
        let mut angle = 2.0 * p.atan2(self.w);
        if angle > PI {
            angle -= 2.0 * PI;
        } else if angle <= -PI {
            angle += 2.0 * PI;
        }
        angle
    }

    /// Rotation matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.compose(&rhs)
    }
}

impl Mul<Vec3> for UnitQuaternion {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.rotate_vector(v)
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.w, self.x, self.y, self.z)
    }
}

pub fn from_axis_angle(angle: f64, axis: Vec3) -> Result<UnitQuaternion, RotError> {
    UnitQuaternion::from_axis_angle(angle, axis)
}

pub fn rotate_vector(q: &UnitQuaternion, v: Vec3) -> Vec3 {
    q.rotate_vector(v)
}

pub fn compose(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    a.compose(b)
}

/// Angle of `a⁻¹ b` in `[0, π]`.
pub fn rotation_angle_between(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    // |a·b| = cos(θ/2). The atan2 form keeps precision near θ = 0 where
    // acos loses half the digits.
    let d = a.dot(b).abs();
    let rel = a.inverse().compose(b);
    let s = rel.vector_part().norm();
    2.0 * s.atan2(d)
}

/// Shortest-arc spherical interpolation, `t` in `[0, 1]`.
pub fn slerp(a: &UnitQuaternion, b: &UnitQuaternion, t: f64) -> UnitQuaternion {
    let mut cos = a.dot(b);
    let b = if cos < 0.0 {
        cos = -cos;
        b.negated()
    } else {
        *b
    };
    if cos > 1.0 - 1e-12 {
        // nlerp is exact to rounding this close
        return UnitQuaternion::renormalized(
            a.w + t * (b.w - a.w),
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            a.z + t * (b.z - a.z),
        );
    }
    let theta = cos.min(1.0).acos();
    let sin = theta.sin();
    let ka = ((1.0 - t) * theta).sin() / sin;
    let kb = (t * theta).sin() / sin;
    UnitQuaternion::renormalized(
        ka * a.w + kb * b.w,
        ka * a.x + kb * b.x,
        ka * a.y + kb * b.y,
        ka * a.z + kb * b.z,
    )
}
