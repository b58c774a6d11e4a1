//! Versioned prompt templates and chat-completions request bodies.

use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::render::RgbImage;

const IMAGES_MARKER: &str = "---images---\n";

pub const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
pub const SELECT_BEST: &str = include_str!("../../assets/prompts/select_best.txt");
pub const DECOMPOSE: &str = include_str!("../../assets/prompts/decompose.txt");
pub const SELECT_ACTIVE: &str = include_str!("../../assets/prompts/select_active.txt");
pub const CHOOSE_VIEW: &str = include_str!("../../assets/prompts/choose_view.txt");
pub const VIEW_REPROMPT: &str = include_str!("../../assets/prompts/view_reprompt.txt");

const ALL: [(&str, &str); 6] = [
    ("system", SYSTEM),
    ("select_best", SELECT_BEST),
    ("decompose", DECOMPOSE),
    ("select_active", SELECT_ACTIVE),
    ("choose_view", CHOOSE_VIEW),
    ("view_reprompt", VIEW_REPROMPT),
];

/// SHA-256 over every template, recorded in trace headers.
pub fn template_hash() -> String {
    let mut h = Sha256::new();
    for (name, text) in ALL {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// Replaces each `{key}` with its value.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// A user message: text before the images, the labeled images, text after.
pub struct Prompt {
    pub before: String,
    pub images: Vec<(String, RgbImage)>,
    pub after: Vec<String>,
}

impl Prompt {
    pub fn new(template: &str, vars: &[(&str, &str)], images: Vec<(String, RgbImage)>) -> Self {
        let filled = fill(template, vars);
        let (before, after) = filled.split_once(IMAGES_MARKER).unwrap_or((filled.as_str(), ""));
        Prompt {
            before: before.trim_end().to_string(),
            images,
            after: vec![after.trim_end().to_string()],
        }
    }

    pub fn numbered_images(images: &[RgbImage]) -> Vec<(String, RgbImage)> {
        images.iter().enumerate().map(|(i, img)| (format!("Image {i}:"), img.clone())).collect()
    }

    pub fn request_body(&self, model: &str) -> Value {
        let mut parts = vec![json!({"type": "text", "text": self.before})];
        for (label, img) in &self.images {
            parts.push(json!({"type": "text", "text": label}));
            let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_png());
            parts.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")}
            }));
        }
        for text in &self.after {
            parts.push(json!({"type": "text", "text": text}));
        }
        json!({
            "model": model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM.trim_end()},
                {"role": "user", "content": parts},
            ],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_replaces_every_occurrence() {
        assert_eq!(fill("{a} and {a}, {b}", &[("a", "x"), ("b", "y")]), "x and x, y");
    }

    #[test]
    fn templates_have_one_image_marker() {
        for (name, text) in [SELECT_BEST, DECOMPOSE, SELECT_ACTIVE, CHOOSE_VIEW]
            .iter()
            .enumerate()
        {
            assert_eq!(text.matches(IMAGES_MARKER).count(), 1, "template {name}");
        }
    }

    #[test]
    fn request_body_is_byte_stable() {
        let img = RgbImage::filled(16, 16, [10, 20, 30]);
        let make = || {
            Prompt::new(SELECT_BEST, &[("count", "2")], Prompt::numbered_images(&[img.clone(), img.clone()]))
                .request_body("m")
        };
        let a = serde_json::to_vec(&make()).unwrap();
        let b = serde_json::to_vec(&make()).unwrap();
        assert_eq!(a, b);
        let v = make();
        assert_eq!(v["temperature"], 0);
        let parts = v["messages"][1]["content"].as_array().unwrap();
        // before, 2 x (label, image), after
        assert_eq!(parts.len(), 6);
        assert_eq!(parts[1]["text"], "Image 0:");
        assert!(parts[2]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    }

    #[test]
    fn template_hash_is_hex_sha256() {
        let h = template_hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, template_hash());
    }
}
