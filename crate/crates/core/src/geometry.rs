//! Rigid poses, axis-aligned boxes, and rotation helpers shared by every
//! other module.
//!
//! Quaternions are serialized scalar-last: `[x, y, z, w]`.

use std::f64::consts::PI;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Vec3 = Vector3<f64>;

/// A rigid transform: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a raw scalar-last quaternion, normalizing it.
    pub fn from_xyzw(position: Vec3, xyzw: [f64; 4]) -> Option<Self> {
        let q = Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return None;
        }
        Some(Self {
            position,
            orientation: UnitQuaternion::new_normalize(q),
        })
    }

    pub fn xyzw(&self) -> [f64; 4] {
        let c = self.orientation.coords;
        [c.x, c.y, c.z, c.w]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(self.orientation * other.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    /// World-frame delta `d` such that `d ∘ self == target`.
    pub fn delta_to(&self, target: &Pose) -> Pose {
        target.compose(&self.inverse())
    }

    /// Rotation by `rotation` about the world-frame point `center`.
    pub fn rotation_about(center: &Vec3, rotation: UnitQuaternion<f64>) -> Pose {
        Pose {
            position: center - rotation * center,
            orientation: rotation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.position == Vec3::zeros() && self.orientation == UnitQuaternion::identity()
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            position: [self.position.x, self.position.y, self.position.z],
            orientation: self.xyzw(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let [x, y, z, w] = repr.orientation;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(serde::de::Error::custom("orientation quaternion has zero norm"));
        }
        // Serialized unit quaternions are taken verbatim so that a
        // write/read cycle is exact; anything else is normalized.
        let orientation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Pose {
            position: Vec3::from(repr.position),
            orientation,
        })
    }
}

/// Axis-aligned bounding box. Serialized as `{"min": [..], "max": [..]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Self {
            min: center - half,
            max: center + half,
        }
    }

    pub fn is_ordered(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i])
    }

    /// True when some extent is zero or negative.
    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| !(self.max[i] > self.min[i]))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn translated(&self, d: &Vec3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn overlaps_xy(&self, other: &Aabb) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }
}

/// Brings an axis-angle vector to magnitude `<= π`.
///
/// A rotation of exactly π is ambiguous in sign; the axis is flipped so that
/// its first nonzero component is positive.
pub fn canonicalize_axis_angle(v: &Vec3) -> Vec3 {
    let angle = v.norm();
    if !angle.is_finite() || angle == 0.0 {
        return Vec3::zeros();
    }
    let axis = v / angle;
    let mut wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped -= 2.0 * PI;
    }
    let mut out = axis * wrapped;
    if (out.norm() - PI).abs() <= 1e-12 {
        out = positive_first_component(out);
    }
    out
}

fn positive_first_component(v: Vec3) -> Vec3 {
    for i in 0..3 {
        if v[i] != 0.0 {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

pub fn quat_from_axis_angle(v: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// Rotation vector of `q` with magnitude in `[0, π]`.
pub fn axis_angle_from_quat(q: &UnitQuaternion<f64>) -> Vec3 {
    let q = hemisphere_canonical(*q);
    canonicalize_axis_angle(&q.scaled_axis())
}

/// Picks the sign of `q` with `w >= 0`; at `w == 0` the vector part's first
/// nonzero component is made positive.
fn hemisphere_canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.coords;
    let flip = if c.w < 0.0 {
        true
    } else if c.w == 0.0 {
        let v = Vec3::new(c.x, c.y, c.z);
        positive_first_component(v) != v
    } else {
        false
    };
    if flip {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Shortest-arc interpolation from `from` to `to` at fraction `t`.
pub fn interpolate_orientation(
    from: &UnitQuaternion<f64>,
    to: &UnitQuaternion<f64>,
    t: f64,
) -> UnitQuaternion<f64> {
    if t >= 1.0 {
        return *to;
    }
    let relative = hemisphere_canonical(from.inverse() * to);
    let step = relative.scaled_axis() * t;
    renormalize(from * UnitQuaternion::from_scaled_axis(step))
}

pub fn interpolate_pose(from: &Pose, to: &Pose, t: f64) -> Pose {
    if t >= 1.0 {
        return *to;
    }
    Pose {
        position: from.position + (to.position - from.position) * t,
        orientation: interpolate_orientation(&from.orientation, &to.orientation, t),
    }
}

/// Quaternion chordal mean: principal eigenvector of `Σ q qᵀ`.
pub fn chordal_mean(quats: &[UnitQuaternion<f64>]) -> UnitQuaternion<f64> {
    if quats.is_empty() {
        return UnitQuaternion::identity();
    }
    let mut m = nalgebra::Matrix4::<f64>::zeros();
    for q in quats {
        let v = q.coords;
        m += v * v.transpose();
    }
    let eig = m.symmetric_eigen();
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best).into_owned();
    hemisphere_canonical(UnitQuaternion::new_normalize(Quaternion::from(v)))
}

pub fn unit(v: Vec3) -> Unit<Vec3> {
    Unit::new_normalize(v)
}
