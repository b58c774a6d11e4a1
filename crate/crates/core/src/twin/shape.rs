use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, Vec3};

/// Body geometry in the body frame. Cylinders run along local z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
    Cylinder { radius: f64, half_height: f64 },
    Mesh { vertices: Vec<Vec3>, faces: Vec<[usize; 3]> },
}

impl Shape {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Shape::Box { half_extents } => {
                if half_extents.iter().all(|h| *h > 0.0) {
                    Ok(())
                } else {
                    Err("box half-extents must be positive".into())
                }
            }
            Shape::Sphere { radius } if *radius > 0.0 => Ok(()),
            Shape::Sphere { .. } => Err("sphere radius must be positive".into()),
            Shape::Cylinder { radius, half_height } if *radius > 0.0 && *half_height > 0.0 => Ok(()),
            Shape::Cylinder { .. } => Err("cylinder dimensions must be positive".into()),
            Shape::Mesh { vertices, faces } => {
                if vertices.len() < 4 || faces.len() < 4 {
                    return Err("mesh needs at least 4 vertices and 4 faces".into());
                }
                if faces.iter().flatten().any(|&i| i >= vertices.len()) {
                    return Err("mesh face index out of range".into());
                }
                Ok(())
            }
        }
    }

    /// Distance from world point `p` to the solid placed at `pose`; zero
    /// inside. Meshes use nearest-vertex distance.
    pub fn distance(&self, pose: &Pose, p: &Vec3) -> f64 {
        if let Shape::Mesh { vertices, .. } = self {
            return vertices
                .iter()
                .map(|v| (pose.transform_point(v) - p).norm())
                .fold(f64::INFINITY, f64::min);
        }
        let local = pose.inverse_transform_point(p);
        match self {
            Shape::Box { half_extents } => {
                let q = local.abs() - half_extents;
                q.map(|c| c.max(0.0)).norm()
            }
            Shape::Sphere { radius } => (local.norm() - radius).max(0.0),
            Shape::Cylinder { radius, half_height } => {
                let radial = (local.x * local.x + local.y * local.y).sqrt() - radius;
                let axial = local.z.abs() - half_height;
                (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt()
            }
            Shape::Mesh { .. } => unreachable!(),
        }
    }

    /// World-frame bounding box of the shape at `pose`.
    pub fn world_aabb(&self, pose: &Pose) -> Aabb {
        let rot = pose.orientation.to_rotation_matrix().into_inner();
        let c = pose.position;
        match self {
            Shape::Box { half_extents } => {
                let half = rot.abs() * half_extents;
                Aabb::from_center_half(c, half)
            }
            Shape::Sphere { radius } => Aabb::from_center_half(c, Vec3::repeat(*radius)),
            Shape::Cylinder { radius, half_height } => {
                let axis = rot.column(2);
                let half = Vec3::from_fn(|i, _| {
                    radius * (1.0 - axis[i] * axis[i]).max(0.0).sqrt() + half_height * axis[i].abs()
                });
                Aabb::from_center_half(c, half)
            }
            Shape::Mesh { vertices, .. } => {
                let mut min = Vec3::repeat(f64::INFINITY);
                let mut max = Vec3::repeat(f64::NEG_INFINITY);
                for v in vertices {
                    let w = pose.transform_point(v);
                    min = min.inf(&w);
                    max = max.sup(&w);
                }
                Aabb::new(min, max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    #[test]
    fn box_distance_outside_and_inside() {
        let s = Shape::Box {
            half_extents: Vec3::new(0.1, 0.2, 0.3),
        };
        let pose = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(s.distance(&pose, &Vec3::new(1.0, 0.0, 0.0)), 0.0);
        assert_relative_eq!(s.distance(&pose, &Vec3::new(1.5, 0.0, 0.0)), 0.4, epsilon = 1e-12);
        assert_relative_eq!(
            s.distance(&pose, &Vec3::new(1.4, 0.6, 0.0)),
            (0.3f64.powi(2) + 0.4f64.powi(2)).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotated_cylinder_aabb() {
        let s = Shape::Cylinder {
            radius: 0.1,
            half_height: 0.5,
        };
        let lying = Pose::new(
            Vec3::zeros(),
            UnitQuaternion::from_scaled_axis(Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)),
        );
        let aabb = s.world_aabb(&lying);
        assert_relative_eq!(aabb.max, Vec3::new(0.1, 0.5, 0.1), epsilon = 1e-12);
        assert_relative_eq!(s.distance(&lying, &Vec3::new(0.0, 0.0, 0.3)), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn mesh_requires_enough_faces() {
        let tet = Shape::Mesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            faces: vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
        };
        assert!(tet.validate().is_ok());
        let bad = Shape::Mesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            faces: vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 4]],
        };
        assert!(bad.validate().is_err());
    }
}
