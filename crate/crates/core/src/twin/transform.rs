use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

use super::{SceneTwin, TwinError};

/// Per-body world-frame deltas: the new pose is `delta ∘ prior`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyTransformSet(pub BTreeMap<String, Pose>);

impl BodyTransformSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, id: &str) -> Option<&Pose> {
        self.0.get(id)
    }

    pub fn insert(&mut self, id: impl Into<String>, delta: Pose) {
        self.0.insert(id.into(), delta);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Pose)> {
        self.0.iter()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().map(|(k, d)| (k.clone(), d.inverse())).collect())
    }

    /// Applies `self` first, then `next`.
    pub fn then(&self, next: &BodyTransformSet) -> Self {
        let mut out = self.0.clone();
        for (id, d) in &next.0 {
            let combined = match out.get(id) {
                Some(first) => d.compose(first),
                None => *d,
            };
            out.insert(id.clone(), combined);
        }
        Self(out)
    }
}

impl FromIterator<(String, Pose)> for BodyTransformSet {
    fn from_iter<I: IntoIterator<Item = (String, Pose)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Moves each keyed body and every splat anchored to it by the body's delta.
pub fn apply_transforms(scene: &SceneTwin, t: &BodyTransformSet) -> Result<SceneTwin, TwinError> {
    for id in t.0.keys() {
        match scene.body(id) {
            Some(b) if b.movable => {}
            _ => return Err(TwinError::UnknownBody(id.clone())),
        }
    }
    let mut out = scene.clone();
    if t.is_empty() {
        return Ok(out);
    }
    for body in &mut out.bodies {
        if let Some(d) = t.get(&body.id) {
            body.pose = d.compose(&body.pose);
        }
    }
    for splat in &mut out.splats {
        if let Some(d) = splat.anchor_body().and_then(|id| t.get(id)) {
            splat.position = d.transform_point(&splat.position);
        }
    }
    Ok(out)
}
