//! JSON scene files.
//!
//! Top-level keys: `bodies`, `splats` or `splats_ply`, `cameras`,
//! `workspace`, `support_plane_z`, `anchor_threshold_m`, `task`. A
//! `splats_ply` path is resolved against the scene file's directory. When
//! `cameras` is absent the default rig at 256x256 is used.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::Aabb;
use crate::render::{default_rig, CameraRig, DEFAULT_IMAGE_SIZE};

use super::{anchor_splats, read_ply, RigidBody, SceneTwin, SplatPoint, TaskSpec, TwinError, DEFAULT_ANCHOR_THRESHOLD};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFileIn {
    bodies: Vec<RigidBody>,
    #[serde(default)]
    splats: Option<Vec<SplatPoint>>,
    #[serde(default)]
    splats_ply: Option<String>,
    #[serde(default)]
    cameras: Option<CameraRig>,
    workspace: Aabb,
    #[serde(default)]
    support_plane_z: f64,
    #[serde(default = "default_threshold")]
    anchor_threshold_m: f64,
    task: TaskSpec,
}

fn default_threshold() -> f64 {
    DEFAULT_ANCHOR_THRESHOLD
}

#[derive(Serialize)]
struct SceneFileOut<'a> {
    bodies: &'a [RigidBody],
    #[serde(skip_serializing_if = "Option::is_none")]
    splats: Option<&'a [SplatPoint]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    splats_ply: Option<&'a str>,
    cameras: &'a CameraRig,
    workspace: &'a Aabb,
    support_plane_z: f64,
    anchor_threshold_m: f64,
    task: &'a TaskSpec,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TwinError + '_ {
    move |source| TwinError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_scene(path: &Path) -> Result<SceneTwin, TwinError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scene(&text, base)
}

/// Parses and validates scene JSON; `base_dir` resolves `splats_ply`.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<SceneTwin, TwinError> {
    let file: SceneFileIn = serde_json::from_str(text).map_err(|e| TwinError::Parse(e.to_string()))?;
    let splats = match (file.splats, file.splats_ply) {
        (Some(_), Some(_)) => {
            return Err(TwinError::invalid("splats", "give either `splats` or `splats_ply`, not both"))
        }
        (Some(s), None) => s,
        (None, Some(rel)) => read_ply(&base_dir.join(rel))?,
        (None, None) => vec![],
    };
    let cameras = match file.cameras {
        Some(c) => c,
        None => default_rig(&file.workspace, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)
            .map_err(|e| TwinError::invalid("workspace", e.to_string()))?,
    };
    let mut scene = SceneTwin {
        bodies: file.bodies,
        splats,
        cameras,
        workspace: file.workspace,
        support_plane_z: file.support_plane_z,
        anchor_threshold_m: file.anchor_threshold_m,
        task: file.task,
    };
    // structural checks before anchoring so errors name the real culprit
    scene.validate()?;
    if scene.splats.iter().any(|s| s.anchor.is_none()) {
        let fresh = anchor_splats(&scene.splats, &scene.bodies, scene.anchor_threshold_m);
        for (splat, anchored) in scene.splats.iter_mut().zip(fresh) {
            if splat.anchor.is_none() {
                splat.anchor = anchored.anchor;
            }
        }
    }
    let bodies = scene.bodies.clone();
    scene.task.resolve(&bodies);
    Ok(scene)
}

/// Serializes with inline splats, or with `splats_ply` pointing at
/// `ply_ref` (the caller writes the PLY).
pub fn scene_to_json(scene: &SceneTwin, ply_ref: Option<&str>) -> String {
    let out = SceneFileOut {
        bodies: &scene.bodies,
        splats: if ply_ref.is_none() { Some(&scene.splats) } else { None },
        splats_ply: ply_ref,
        cameras: &scene.cameras,
        workspace: &scene.workspace,
        support_plane_z: scene.support_plane_z,
        anchor_threshold_m: scene.anchor_threshold_m,
        task: &scene.task,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("scene serialization cannot fail");
    s.push('\n');
    s
}

pub fn write_scene(path: &Path, scene: &SceneTwin) -> Result<(), TwinError> {
    std::fs::write(path, scene_to_json(scene, None)).map_err(io_err(path))
}

/// SHA-256 over the scene file bytes and, if referenced, the PLY bytes.
pub fn scene_content_hash(path: &Path) -> Result<String, TwinError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| TwinError::Parse(e.to_string()))?;
    if let Some(rel) = value.get("splats_ply").and_then(|v| v.as_str()) {
        let ply = path.parent().unwrap_or_else(|| Path::new(".")).join(rel);
        hasher.update(std::fs::read(&ply).map_err(io_err(&ply))?);
    }
    Ok(hex::encode(hasher.finalize()))
}
