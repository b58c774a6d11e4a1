//! Collision proxies and penetration queries.
//!
//! Spheres stay spheres; every other shape collides through its world-frame
//! bounding box. Contact normals follow the axis of minimum translational
//! separation.

use crate::geometry::{Aabb, Vec3};
use crate::twin::{RigidBody, Shape};
use crate::geometry::Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Proxy {
    Sphere { center: Vec3, radius: f64 },
    Box(Aabb),
}

impl Proxy {
    pub fn of_body(body: &RigidBody, pose: &Pose) -> Proxy {
        match &body.shape {
            Shape::Sphere { radius } => Proxy::Sphere {
                center: pose.position,
                radius: *radius,
            },
            shape => Proxy::Box(shape.world_aabb(pose)),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Proxy::Sphere { center, radius } => Aabb::from_center_half(*center, Vec3::repeat(*radius)),
            Proxy::Box(b) => *b,
        }
    }

    pub fn min_z(&self) -> f64 {
        self.bounds().min.z
    }
}

/// Penetration depth of `a` into `b` and the unit direction along which `b`
/// must move to separate. `None` when they do not overlap.
pub fn penetration(a: &Proxy, b: &Proxy) -> Option<(f64, Vec3)> {
    match (a, b) {
        (Proxy::Box(a), Proxy::Box(b)) => box_box(a, b),
        (Proxy::Sphere { center: ca, radius: ra }, Proxy::Sphere { center: cb, radius: rb }) => {
            let d = cb - ca;
            let dist = d.norm();
            let depth = ra + rb - dist;
            if depth <= 0.0 {
                return None;
            }
            let n = if dist > 0.0 { d / dist } else { Vec3::z() };
            Some((depth, n))
        }
        (Proxy::Box(a), Proxy::Sphere { center, radius }) => box_sphere(a, center, *radius),
        (Proxy::Sphere { center, radius }, Proxy::Box(b)) => {
            box_sphere(b, center, *radius).map(|(depth, n)| (depth, -n))
        }
    }
}

fn box_box(a: &Aabb, b: &Aabb) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..3 {
        let overlap = (a.max[i] - b.min[i]).min(b.max[i] - a.min[i]);
        if overlap <= 0.0 {
            return None;
        }
        if best.is_none_or(|(o, _)| overlap < o) {
            best = Some((overlap, i));
        }
    }
    let (depth, axis) = best?;
    let mut n = Vec3::zeros();
    n[axis] = if b.center()[axis] >= a.center()[axis] { 1.0 } else { -1.0 };
    Some((depth, n))
}

/// Direction is the one the sphere must move to leave the box.
fn box_sphere(b: &Aabb, c: &Vec3, r: f64) -> Option<(f64, Vec3)> {
    if b.contains(c) {
        // center inside: exit through the nearest face
        let mut best = (f64::INFINITY, Vec3::zeros());
        for i in 0..3 {
            for (dist, sign) in [(c[i] - b.min[i], -1.0), (b.max[i] - c[i], 1.0)] {
                if dist < best.0 {
                    let mut n = Vec3::zeros();
                    n[i] = sign;
                    best = (dist, n);
                }
            }
        }
        return Some((best.0 + r, best.1));
    }
    let closest = b.clamp(c);
    let d = c - closest;
    let dist = d.norm();
    if dist >= r {
        return None;
    }
    Some((r - dist, d / dist))
}
