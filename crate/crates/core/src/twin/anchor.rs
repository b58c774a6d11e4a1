use super::{Anchor, RigidBody, SplatPoint};

pub const DEFAULT_ANCHOR_THRESHOLD: f64 = 0.05;

/// Assigns every splat to the nearest movable body within `threshold`
/// meters of its center, or to the static background.
///
/// Distance is exact surface distance for primitives and nearest-vertex
/// distance for meshes. Ties go to the lexicographically smallest id.
pub fn anchor_splats(splats: &[SplatPoint], bodies: &[RigidBody], threshold: f64) -> Vec<SplatPoint> {
    let mut movable: Vec<&RigidBody> = bodies.iter().filter(|b| b.movable).collect();
    movable.sort_by(|a, b| a.id.cmp(&b.id));

    splats
        .iter()
        .map(|splat| {
            let mut best: Option<(&str, f64)> = None;
            for body in &movable {
                let d = body.surface_distance(&splat.position);
                if d > threshold {
                    continue;
                }
                match best {
                    Some((_, bd)) if d >= bd => {}
                    _ => best = Some((&body.id, d)),
                }
            }
            SplatPoint {
                anchor: Some(match best {
                    Some((id, _)) => Anchor::Body(id.to_string()),
                    None => Anchor::Static,
                }),
                ..splat.clone()
            }
        })
        .collect()
}
