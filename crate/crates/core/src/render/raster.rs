use crate::geometry::Vec3;
use crate::sim::gripper::{finger_half_extents, finger_poses};
use crate::sim::GripperState;
use crate::twin::{SceneTwin, SplatPoint};

use super::{Camera, Projection, RenderOutput};

pub const BACKGROUND: [u8; 3] = [64, 64, 64];
const FINGER_COLOR: [f64; 3] = [230.0, 140.0, 40.0];
const AMBIENT: f64 = 0.35;

fn light_dir() -> Vec3 {
    Vec3::new(0.3, -0.4, 0.866).normalize()
}

/// Discs in scene order, each depth-tested against what is already drawn.
pub fn render_splats(scene: &SceneTwin, camera: &Camera) -> RenderOutput {
    let mut out = RenderOutput::empty(camera.width, camera.height);
    for splat in &scene.splats {
        draw_splat(&mut out, camera, splat);
    }
    out
}

fn draw_splat(out: &mut RenderOutput, camera: &Camera, splat: &SplatPoint) {
    let (u, v, depth) = match camera.project_camera_point(&camera.to_camera_frame(&splat.position)) {
        Projection::Visible { pixel, depth } if depth <= camera.far => (pixel[0], pixel[1], depth),
        _ => return,
    };
    let r = (camera.fx * splat.radius / depth).max(1.0);
    let (w, h) = (camera.width as i64, camera.height as i64);
    let x0 = ((u - r).floor() as i64).max(0);
    let x1 = ((u + r).ceil() as i64).min(w - 1);
    let y0 = ((v - r).floor() as i64).max(0);
    let y1 = ((v + r).ceil() as i64).min(h - 1);
    let alpha = splat.opacity;
    for y in y0..=y1 {
        let dy = y as f64 + 0.5 - v;
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - u;
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let i = (y * w + x) as usize;
            if depth >= out.depth[i] {
                continue;
            }
            out.depth[i] = depth;
            let px = &mut out.color.data[i * 3..i * 3 + 3];
            if alpha >= 1.0 {
                px.copy_from_slice(&splat.color);
            } else {
                for c in 0..3 {
                    px[c] = (alpha * splat.color[c] as f64 + (1.0 - alpha) * px[c] as f64).round() as u8;
                }
            }
        }
    }
}

/// Box faces as (corner indices, outward local normal). Corner index bits
/// select the sign of x, y, z.
const FACES: [([usize; 4], [f64; 3]); 6] = [
    ([0, 2, 6, 4], [-1.0, 0.0, 0.0]),
    ([1, 5, 7, 3], [1.0, 0.0, 0.0]),
    ([0, 4, 5, 1], [0.0, -1.0, 0.0]),
    ([2, 3, 7, 6], [0.0, 1.0, 0.0]),
    ([0, 1, 3, 2], [0.0, 0.0, -1.0]),
    ([4, 6, 7, 5], [0.0, 0.0, 1.0]),
];

/// Both fingers as 12-triangle boxes with flat per-face shading.
pub fn render_gripper(gripper: &GripperState, camera: &Camera) -> RenderOutput {
    let mut out = RenderOutput::empty(camera.width, camera.height);
    let half = finger_half_extents();
    let light = light_dir();
    for finger in finger_poses(&gripper.pose, gripper.fingers) {
        let corners: Vec<Vec3> = (0..8)
            .map(|i| {
                let local = Vec3::new(
                    if i & 1 != 0 { half.x } else { -half.x },
                    if i & 2 != 0 { half.y } else { -half.y },
                    if i & 4 != 0 { half.z } else { -half.z },
                );
                camera.to_camera_frame(&finger.transform_point(&local))
            })
            .collect();
        for (quad, normal) in FACES {
            let n = finger.orientation * Vec3::from(normal);
            let shade = AMBIENT + (1.0 - AMBIENT) * n.dot(&light).max(0.0);
            let color = FINGER_COLOR.map(|c| (c * shade).round().clamp(0.0, 255.0) as u8);
            for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                draw_triangle(&mut out, camera, [corners[tri[0]], corners[tri[1]], corners[tri[2]]], color);
            }
        }
    }
    out
}

/// Keeps the part of a camera-frame polygon with `z >= near`.
fn clip_near(poly: &[Vec3], near: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.z >= near;
        let b_in = b.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = near;
            out.push(p);
        }
    }
    out
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn draw_triangle(out: &mut RenderOutput, camera: &Camera, tri: [Vec3; 3], color: [u8; 3]) {
    let poly = clip_near(&tri, camera.near);
    if poly.len() < 3 {
        return;
    }
    // screen position plus 1/z for perspective-correct depth
    let pts: Vec<([f64; 2], f64)> = poly
        .iter()
        .map(|p| ([camera.fx * p.x / p.z + camera.cx, camera.fy * p.y / p.z + camera.cy], 1.0 / p.z))
        .collect();
    for k in 1..pts.len() - 1 {
        fill(out, camera, [pts[0], pts[k], pts[k + 1]], color);
    }
}

fn fill(out: &mut RenderOutput, camera: &Camera, v: [([f64; 2], f64); 3], color: [u8; 3]) {
    let area = edge(v[0].0, v[1].0, v[2].0);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let (w, h) = (camera.width as i64, camera.height as i64);
    let xs = [v[0].0[0], v[1].0[0], v[2].0[0]];
    let ys = [v[0].0[1], v[1].0[1], v[2].0[1]];
    let x0 = (xs.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64).max(0);
    let x1 = (xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(w - 1);
    let y0 = (ys.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64).max(0);
    let y1 = (ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let b0 = edge(v[1].0, v[2].0, p) / area;
            let b1 = edge(v[2].0, v[0].0, p) / area;
            let b2 = edge(v[0].0, v[1].0, p) / area;
            if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                continue;
            }
            let depth = 1.0 / (b0 * v[0].1 + b1 * v[1].1 + b2 * v[2].1);
            if depth > camera.far {
                continue;
            }
            let i = (y * w + x) as usize;
            if depth < out.depth[i] {
                out.depth[i] = depth;
                out.color.data[i * 3..i * 3 + 3].copy_from_slice(&color);
            }
        }
    }
}
