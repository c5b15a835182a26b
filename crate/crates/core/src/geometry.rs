//! Pose and direction math.
//!
//! Conventions used throughout the crate:
//!
//! - World frame: `x`, `y` span the floor, `z` points up.
//! - Device frame: `x` forward, `y` left, `z` up.
//! - Euler angles are intrinsic yaw → pitch → roll (Z, then Y, then X of the
//!   device frame). Yaw is positive counterclockwise seen from above, pitch is
//!   positive nose-up, roll is positive right-hand about the forward axis.
//! - Azimuth is measured in the local horizontal plane from the forward axis,
//!   positive counterclockwise; elevation is positive upward.
//!
//! Degrees appear at every public boundary. Rotations are stored as unit
//! quaternions so composition and distance stay well-defined at pitch = ±90°.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::scalar::Scalar;

/// Convention tag written into trace metadata.
pub const EULER_CONVENTION: &str = "intrinsic-ZYX-deg";

/// Wraps an angle in degrees into `[-180, 180)`, keeping `180` as `180`.
pub fn wrap_deg<T: Scalar>(a: T) -> T {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    if a >= -half && a <= half {
        return a;
    }
    let mut w = (a + half) % full;
    if w < T::zero() {
        w = w + full;
    }
    w - half
}

/// Minimal 3-vector used for direction math.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vector3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > T::zero() && n.is_finite()).then(|| self.scale(T::one() / n))
    }
}

impl<T: Scalar> Add for Vector3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Vector3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Neg for Vector3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// HMD orientation in degrees. Construct through [`Orientation::new`], which
/// enforces yaw, roll ∈ [-180, 180] and pitch ∈ [-90, 90].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Orientation<T> {
    yaw: T,
    pitch: T,
    roll: T,
}

impl<T: Scalar> Orientation<T> {
    pub fn new(yaw: T, pitch: T, roll: T) -> Result<Self, GeometryError> {
        check_range("yaw", yaw, T::lit(180.0), "[-180, 180]")?;
        check_range("pitch", pitch, T::lit(90.0), "[-90, 90]")?;
        check_range("roll", roll, T::lit(180.0), "[-180, 180]")?;
        Ok(Self { yaw, pitch, roll })
    }

    /// Builds an orientation after wrapping yaw and roll into range and
    /// clamping pitch. Non-finite input still fails.
    pub fn wrapped(yaw: T, pitch: T, roll: T) -> Result<Self, GeometryError> {
        let ninety = T::lit(90.0);
        Self::new(wrap_deg(yaw), pitch.max(-ninety).min(ninety), wrap_deg(roll))
    }

    pub fn identity() -> Self {
        Self {
            yaw: T::zero(),
            pitch: T::zero(),
            roll: T::zero(),
        }
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn roll(&self) -> T {
        self.roll
    }

    pub fn to_rotation(&self) -> Rotation<T> {
        orientation_to_rotation(self)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Orientation<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<T> {
            #[serde(default)]
            yaw: T,
            #[serde(default)]
            pitch: T,
            #[serde(default)]
            roll: T,
        }
        let raw = Raw::<T>::deserialize(d)?;
        Orientation::new(raw.yaw, raw.pitch, raw.roll).map_err(serde::de::Error::custom)
    }
}

fn check_range<T: Scalar>(
    field: &'static str,
    value: T,
    limit: T,
    allowed: &'static str,
) -> Result<(), GeometryError> {
    if value.is_finite() && value >= -limit && value <= limit {
        Ok(())
    } else {
        Err(GeometryError::OutOfRange {
            field,
            value: value.to_f64_lossy(),
            allowed,
        })
    }
}

/// Position in meters, world frame. The floor is `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Position<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= T::zero()
    }

    pub fn to_vector(self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn distance(&self, other: &Self) -> T {
        (other.to_vector() - self.to_vector()).norm()
    }

    pub fn lerp(&self, other: &Self, f: T) -> Self {
        Self::new(
            self.x + (other.x - self.x) * f,
            self.y + (other.y - self.y) * f,
            self.z + (other.z - self.z) * f,
        )
    }
}

/// Unit-sphere direction: azimuth ∈ [-180, 180], elevation ∈ [-90, 90], degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionAzEl<T> {
    pub azimuth: T,
    pub elevation: T,
}

impl<T: Scalar> DirectionAzEl<T> {
    pub fn new(azimuth: T, elevation: T) -> Self {
        Self { azimuth, elevation }
    }

    pub fn boresight() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Direction of a non-zero vector; `None` for the zero vector.
    pub fn from_vector(v: Vector3<T>) -> Option<Self> {
        let u = v.normalized()?;
        let az = u.y.atan2(u.x).to_degrees();
        let el = u.z.atan2(u.x.hypot(u.y)).to_degrees();
        Some(Self::new(az, el))
    }

    pub fn to_unit_vector(self) -> Vector3<T> {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }

    /// Great-circle angle to `other` in degrees, [0, 180].
    pub fn angle_to(self, other: Self) -> T {
        angle_between_directions(self, other)
    }
}

/// Rotation stored as a unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T> {
    w: T,
    x: T,
    y: T,
    z: T,
}

impl<T: Scalar> Rotation<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Right-handed rotation of `angle_deg` about `axis` (need not be unit).
    pub fn from_axis_angle(axis: Vector3<T>, angle_deg: T) -> Self {
        let Some(a) = axis.normalized() else {
            return Self::identity();
        };
        let (s, c) = (angle_deg.to_radians() / T::lit(2.0)).sin_cos();
        Self {
            w: c,
            x: a.x * s,
            y: a.y * s,
            z: a.z * s,
        }
    }

    fn about_z(deg: T) -> Self {
        Self::from_axis_angle(Vector3::new(T::zero(), T::zero(), T::one()), deg)
    }

    fn about_y(deg: T) -> Self {
        Self::from_axis_angle(Vector3::new(T::zero(), T::one(), T::zero()), deg)
    }

    fn about_x(deg: T) -> Self {
        Self::from_axis_angle(Vector3::new(T::one(), T::zero(), T::zero()), deg)
    }

    pub fn components(&self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn inverse(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    fn renormalized(self) -> Self {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Rotates a vector from the rotated (device) frame into the reference frame.
    pub fn rotate(&self, v: Vector3<T>) -> Vector3<T> {
        let q = Vector3::new(self.x, self.y, self.z);
        let two = T::lit(2.0);
        let t = q.cross(v).scale(two);
        v + t.scale(self.w) + q.cross(t)
    }

    /// Expresses a reference-frame vector in the rotated frame.
    pub fn inverse_rotate(&self, v: Vector3<T>) -> Vector3<T> {
        self.inverse().rotate(v)
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Geodesic rotation angle to `other`, degrees in [0, 180].
    pub fn angle_to(&self, other: &Self) -> T {
        if self == other {
            return T::zero();
        }
        let d = self.inverse() * *other;
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        (T::lit(2.0) * v.atan2(d.w.abs())).to_degrees()
    }

    /// Spherical interpolation along the shortest arc; `f = 0` gives `self`.
    pub fn slerp(&self, other: &Self, f: T) -> Self {
        let mut o = *other;
        let mut cos = self.dot(other);
        if cos < T::zero() {
            o = Self {
                w: -o.w,
                x: -o.x,
                y: -o.y,
                z: -o.z,
            };
            cos = -cos;
        }
        let (a, b) = if cos > T::lit(1.0 - 1e-12) {
            (T::one() - f, f)
        } else {
            let theta = cos.min(T::one()).acos();
            let s = theta.sin();
            (((T::one() - f) * theta).sin() / s, (f * theta).sin() / s)
        };
        Self {
            w: self.w * a + o.w * b,
            x: self.x * a + o.x * b,
            y: self.y * a + o.y * b,
            z: self.z * a + o.z * b,
        }
        .renormalized()
    }

    /// Rotation moving `self` toward `other` by at most `max_deg` along the geodesic.
    /// Returns the new rotation and whether `other` was reached.
    pub fn step_toward(&self, other: &Self, max_deg: T) -> (Self, bool) {
        let dist = self.angle_to(other);
        if dist <= max_deg || dist <= T::lit(1e-12) {
            (*other, true)
        } else {
            (self.slerp(other, max_deg / dist), false)
        }
    }

    /// Row-major rotation matrix.
    pub fn matrix(&self) -> [[T; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = T::one();
        let two = T::lit(2.0);
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    pub fn to_orientation(&self) -> Orientation<T> {
        rotation_to_orientation(self)
    }
}

impl<T: Scalar> Mul for Rotation<T> {
    type Output = Self;

    /// Hamilton product: `a * b` applies `b` in the frame produced by `a`.
    fn mul(self, o: Self) -> Self {
        Self {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }
}

pub fn orientation_to_rotation<T: Scalar>(o: &Orientation<T>) -> Rotation<T> {
    // Positive pitch lifts the forward axis, i.e. a negative turn about +y (left).
    (Rotation::about_z(o.yaw) * Rotation::about_y(-o.pitch) * Rotation::about_x(o.roll))
        .renormalized()
}

/// Inverse of [`orientation_to_rotation`]. At pitch = ±90° roll is folded into yaw
/// and reported as 0; the returned orientation still maps to the same rotation.
pub fn rotation_to_orientation<T: Scalar>(r: &Rotation<T>) -> Orientation<T> {
    let m = r.matrix();
    let sin_pitch = m[2][0].max(-T::one()).min(T::one());
    let cos_pitch = m[2][1].hypot(m[2][2]);
    let pitch = sin_pitch.atan2(cos_pitch).to_degrees();
    let (yaw, roll) = if cos_pitch < T::lit(1e-9) {
        ((-m[0][1]).atan2(m[1][1]).to_degrees(), T::zero())
    } else {
        (
            m[1][0].atan2(m[0][0]).to_degrees(),
            m[2][1].atan2(m[2][2]).to_degrees(),
        )
    };
    Orientation {
        yaw: wrap_deg(yaw),
        pitch: pitch.max(T::lit(-90.0)).min(T::lit(90.0)),
        roll: wrap_deg(roll),
    }
}

/// Geodesic distance between two rotations, degrees in [0, 180].
pub fn angular_distance<T: Scalar>(a: &Rotation<T>, b: &Rotation<T>) -> T {
    a.angle_to(b)
}

/// Great-circle angle between two directions, degrees in [0, 180].
pub fn angle_between_directions<T: Scalar>(a: DirectionAzEl<T>, b: DirectionAzEl<T>) -> T {
    let u = a.to_unit_vector();
    let v = b.to_unit_vector();
    // atan2 form keeps precision for both tiny and near-antipodal angles.
    u.cross(v).norm().atan2(u.dot(v)).to_degrees()
}

/// Direction from `from` to `node`, expressed in the frame given by `frame`
/// (a rotation from that frame to the world frame).
pub fn los_direction_in_frame<T: Scalar>(
    from: &Position<T>,
    frame: &Rotation<T>,
    node: &Position<T>,
) -> Result<DirectionAzEl<T>, GeometryError> {
    let world = node.to_vector() - from.to_vector();
    let local = frame.inverse_rotate(world);
    DirectionAzEl::from_vector(local).ok_or(GeometryError::ZeroDistance)
}

/// Line-of-sight direction from the device to `node` in the device frame.
pub fn los_direction_in_device_frame<T: Scalar>(
    pose_position: &Position<T>,
    pose_orientation: &Orientation<T>,
    node: &Position<T>,
) -> Result<DirectionAzEl<T>, GeometryError> {
    los_direction_in_frame(pose_position, &pose_orientation.to_rotation(), node)
}
