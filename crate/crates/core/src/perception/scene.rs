use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// Larger is farther from the camera.
    pub depth: f64,
}

/// Ground-truth synthetic world used by the mock toolkit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub caption: String,
    /// Question → answer. Keys are matched after normalization.
    #[serde(default)]
    pub qa: BTreeMap<String, String>,
}

fn default_format_version() -> u32 {
    1
}

/// Lowercase, trim and collapse inner whitespace.
pub(crate) fn normalize_question(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.height.is_finite() && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Invalid(format!("scene size {}x{} must be positive", self.width, self.height)));
        }
        for o in &self.objects {
            if o.name.trim().is_empty() {
                return Err(Error::Invalid("scene object with empty name".into()));
            }
            let b = &o.bbox;
            if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > self.width || b.y2 > self.height {
                return Err(Error::Invalid(format!(
                    "box {} of `{}` outside the {}x{} image",
                    b, o.name, self.width, self.height
                )));
            }
            if !o.depth.is_finite() {
                return Err(Error::Invalid(format!("non-finite depth for `{}`", o.name)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scene {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox { x1: 0.0, y1: 0.0, x2: self.width, y2: self.height }
    }

    pub fn answer(&self, question: &str) -> Option<&str> {
        let key = normalize_question(question);
        self.qa.iter().find(|(q, _)| normalize_question(q) == key).map(|(_, a)| a.as_str())
    }
}
