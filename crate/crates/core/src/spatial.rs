//! Composition of remote play spaces into one shared world, and the
//! coalescence luminosity model.
//!
//! Conventions: right-handed coordinates, `y` is up, and a positive rotation
//! about `+y` is counterclockwise when viewed from above. Every node's local
//! play space is mapped into the shared frame by a pure rotation about the
//! vertical axis through the common center; node `k` of `n` is rotated by
//! `k * 360/n` degrees so participants face each other around a circle.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("node index {index} out of range for {n} participants")]
    NodeIndexOutOfRange { index: usize, n: usize },
    #[error("at least one participant is required")]
    NoParticipants,
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
}

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rescales to at most `max_len`, leaving shorter vectors untouched.
    pub fn clamp_length(self, max_len: f64) -> Vec3 {
        let len = self.norm();
        if len > max_len && len > 0.0 {
            self * (max_len / len)
        } else {
            self
        }
    }

    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self) * t
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

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let axis = axis * (1.0 / axis.norm());
        let (s, c) = (angle * 0.5).sin_cos();
        Quat { w: c, x: axis.x * s, y: axis.y * s, z: axis.z * s }
    }

    /// Rotation about the vertical axis, counterclockwise seen from `+y`.
    pub fn about_y(angle: f64) -> Quat {
        let (s, c) = (angle * 0.5).sin_cos();
        Quat { w: c, x: 0.0, y: s, z: 0.0 }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w (q x v) + 2 q x (q x v)
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }

    /// Rotation angle about `+y` for a pure yaw quaternion, in radians.
    pub fn yaw(self) -> f64 {
        2.0 * self.y.atan2(self.w)
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }
}

/// Position and orientation of a tracked point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn at(position: Vec3) -> Pose {
        Pose { position, orientation: Quat::IDENTITY }
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite() && self.orientation.is_unit(1e-6)
    }
}

/// Physical tracking area of one node, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaySpace {
    pub width: f64,
    pub depth: f64,
}

impl Default for PlaySpace {
    fn default() -> Self {
        Self { width: 2.0, depth: 3.0 }
    }
}

impl PlaySpace {
    pub fn new(width: f64, depth: f64) -> Result<Self, SpatialError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(SpatialError::InvalidParameter { what: "play space width", value: width });
        }
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(SpatialError::InvalidParameter { what: "play space depth", value: depth });
        }
        Ok(Self { width, depth })
    }

    /// Whether a local-frame point lies over the floor area centred on the origin.
    pub fn contains(&self, p: Vec3) -> bool {
        p.x.abs() <= self.width / 2.0 && p.z.abs() <= self.depth / 2.0
    }
}

/// Rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: Quat::IDENTITY, translation: Vec3::ZERO };

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose {
            position: self.apply_point(pose.position),
            orientation: (self.rotation * pose.orientation).normalized(),
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.conjugate();
        RigidTransform { rotation, translation: -rotation.rotate(self.translation) }
    }
}

/// Placement of node `node_index` among `n_participants` arranged radially
/// around a shared center.
pub fn radial_transform(node_index: usize, n_participants: usize) -> Result<RigidTransform, SpatialError> {
    if n_participants == 0 {
        return Err(SpatialError::NoParticipants);
    }
    if node_index >= n_participants {
        return Err(SpatialError::NodeIndexOutOfRange { index: node_index, n: n_participants });
    }
    if node_index == 0 {
        return Ok(RigidTransform::IDENTITY);
    }
    let angle = std::f64::consts::TAU * node_index as f64 / n_participants as f64;
    Ok(RigidTransform { rotation: Quat::about_y(angle), translation: Vec3::ZERO })
}

/// Maps a pose from a node's local play-space frame into the shared frame.
pub fn to_shared(local: &Pose, t: &RigidTransform) -> Pose {
    t.apply(local)
}

/// Gaussian "energetic body" used for coalescence luminosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyKernel {
    /// Gaussian radius in meters.
    pub sigma: f64,
    pub base_luminosity: f64,
    pub pair_gain: f64,
    /// Vertical offset from the tracked head to the body center.
    #[serde(default = "default_heart_offset")]
    pub heart_offset_y: f64,
}

fn default_heart_offset() -> f64 {
    -0.4
}

impl Default for BodyKernel {
    fn default() -> Self {
        Self { sigma: 0.35, base_luminosity: 1.0, pair_gain: 1.0, heart_offset_y: default_heart_offset() }
    }
}

impl BodyKernel {
    pub fn validate(&self) -> Result<(), SpatialError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SpatialError::InvalidParameter { what: "kernel sigma", value: self.sigma });
        }
        if !(self.base_luminosity > 0.0 && self.base_luminosity.is_finite()) {
            return Err(SpatialError::InvalidParameter {
                what: "base luminosity",
                value: self.base_luminosity,
            });
        }
        if !(self.pair_gain >= 0.0 && self.pair_gain.is_finite()) {
            return Err(SpatialError::InvalidParameter { what: "pair gain", value: self.pair_gain });
        }
        Ok(())
    }

    /// Body center for a head pose.
    pub fn body_center(&self, head: &Pose) -> Vec3 {
        head.position + Vec3::new(0.0, self.heart_offset_y, 0.0)
    }
}

/// Normalized cross-correlation of two Gaussian bodies at distance `|a-b|`:
/// `exp(-d^2 / (4 sigma^2))`.
pub fn pair_overlap(a: Vec3, b: Vec3, kernel: &BodyKernel) -> f64 {
    let d2 = (a - b).norm_squared();
    (-d2 / (4.0 * kernel.sigma * kernel.sigma)).exp()
}

/// Total light of a group: one base unit per body plus a gain per pairwise overlap.
pub fn group_luminosity(centers: &[Vec3], kernel: &BodyKernel) -> f64 {
    let mut total = centers.len() as f64 * kernel.base_luminosity;
    for (i, &a) in centers.iter().enumerate() {
        for &b in &centers[i + 1..] {
            total += kernel.pair_gain * pair_overlap(a, b, kernel);
        }
    }
    total
}

/// Per-body share of the group light; each pair's term is split evenly
/// between its two bodies, so the shares sum to [`group_luminosity`].
pub fn body_luminosities(centers: &[Vec3], kernel: &BodyKernel) -> Vec<f64> {
    let mut out = vec![kernel.base_luminosity; centers.len()];
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let half = 0.5 * kernel.pair_gain * pair_overlap(centers[i], centers[j], kernel);
            out[i] += half;
            out[j] += half;
        }
    }
    out
}
