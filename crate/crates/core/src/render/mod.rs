//! Software rendering of the twin: splats as depth-tested discs, the gripper
//! as flat-shaded boxes, and depth compositing of the two.

mod camera;
mod image;
mod raster;

use std::collections::BTreeMap;

use thiserror::Error;

pub use camera::{default_rig, look_at, project, Camera, CameraRig, Projection, ViewName, DEFAULT_IMAGE_SIZE};
pub use image::{write_pfm, RgbImage};
pub use raster::{render_gripper, render_splats, BACKGROUND};

use crate::sim::GripperState;
use crate::twin::SceneTwin;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("degenerate workspace")]
    DegenerateWorkspace,
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("png: {0}")]
    Png(String),
    #[error("io: {0}")]
    Io(String),
}

/// Color plus per-pixel depth in meters; `+inf` where nothing was drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: RgbImage,
    pub depth: Vec<f64>,
}

impl RenderOutput {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            color: RgbImage::filled(width, height, BACKGROUND),
            depth: vec![f64::INFINITY; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.color.width
    }

    pub fn height(&self) -> u32 {
        self.color.height
    }
}

/// Per pixel, the strictly nearer input wins; ties go to the foreground.
pub fn composite(background: &RenderOutput, foreground: &RenderOutput) -> Result<RenderOutput, RenderError> {
    if background.width() != foreground.width() || background.height() != foreground.height() {
        return Err(RenderError::DimensionMismatch(
            background.width(),
            background.height(),
            foreground.width(),
            foreground.height(),
        ));
    }
    let mut out = background.clone();
    for (i, (&fd, &bd)) in foreground.depth.iter().zip(&background.depth).enumerate() {
        if fd.is_finite() && fd <= bd {
            out.depth[i] = fd;
            out.color.data[i * 3..i * 3 + 3].copy_from_slice(&foreground.color.data[i * 3..i * 3 + 3]);
        }
    }
    Ok(out)
}

/// Scene splats composited with the gripper for one camera.
pub fn render_view(scene: &SceneTwin, gripper: &GripperState, camera: &Camera) -> RenderOutput {
    let background = render_splats(scene, camera);
    let foreground = render_gripper(gripper, camera);
    composite(&background, &foreground).expect("both renders use the camera's dimensions")
}

pub fn render_views(scene: &SceneTwin, gripper: &GripperState, rig: &CameraRig) -> BTreeMap<ViewName, RgbImage> {
    rig.iter()
        .map(|(name, cam)| (name, render_view(scene, gripper, cam).color))
        .collect()
}
