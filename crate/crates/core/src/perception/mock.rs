//! Ground-truth toolkit over a synthetic [`Scene`]. Every operation is a pure
//! function of the scene, the patch and the arguments.

use super::scene::{normalize_question, Scene, SceneObject};
use super::{Patch, PerceptionToolkit};
use crate::error::{Error, Result};
use crate::state::BoundingBox;

fn name_matches(object: &SceneObject, name: &str) -> bool {
    object.name.trim().eq_ignore_ascii_case(name.trim())
}

fn objects_in<'a>(scene: &'a Scene, patch: &'a Patch) -> impl Iterator<Item = &'a SceneObject> {
    scene.objects.iter().filter(move |o| patch.bbox.contains_point(o.bbox.center()))
}

/// Objects named `name` whose centers lie inside `patch`, sorted by `x1`,
/// then `y1`, then scene order.
pub fn mock_find(scene: &Scene, image: &str, patch: &Patch, name: &str) -> Vec<Patch> {
    let mut hits: Vec<&SceneObject> = objects_in(scene, patch).filter(|o| name_matches(o, name)).collect();
    hits.sort_by(|a, b| a.bbox.x1.total_cmp(&b.bbox.x1).then(a.bbox.y1.total_cmp(&b.bbox.y1)));
    let label = name.trim().to_lowercase();
    hits.into_iter()
        .enumerate()
        .map(|(k, o)| Patch::new(image, o.bbox, format!("{label}_{}", k + 1)))
        .collect()
}

pub fn mock_exists(scene: &Scene, patch: &Patch, name: &str) -> bool {
    objects_in(scene, patch).any(|o| name_matches(o, name))
}

/// True when some object named `name` inside the patch carries `attribute`
/// either as an attribute value or as a truthy attribute key.
pub fn mock_verify_property(scene: &Scene, patch: &Patch, name: &str, attribute: &str) -> bool {
    let attr = attribute.trim();
    objects_in(scene, patch).filter(|o| name_matches(o, name)).any(|o| {
        o.attributes.iter().any(|(k, v)| {
            v.trim().eq_ignore_ascii_case(attr)
                || (k.trim().eq_ignore_ascii_case(attr) && matches!(v.trim().to_lowercase().as_str(), "true" | "yes"))
        })
    })
}

pub fn mock_caption(scene: &Scene, patch: &Patch) -> String {
    if patch.bbox == scene.full_box() {
        return scene.caption.clone();
    }
    let names: Vec<&str> = objects_in(scene, patch).map(|o| o.name.as_str()).collect();
    if names.is_empty() {
        "an empty region".to_string()
    } else {
        format!("a region containing {}", names.join(", "))
    }
}

pub fn mock_simple_query(scene: &Scene, question: &str) -> String {
    scene.answer(question).unwrap_or("unknown").to_string()
}

/// Median depth of the objects centered in the patch; 0 for an empty patch.
pub fn mock_compute_depth(scene: &Scene, patch: &Patch) -> f64 {
    let mut depths: Vec<f64> = objects_in(scene, patch).map(|o| o.depth).collect();
    if depths.is_empty() {
        return 0.0;
    }
    depths.sort_by(f64::total_cmp);
    let mid = depths.len() / 2;
    if depths.len() % 2 == 1 {
        depths[mid]
    } else {
        (depths[mid - 1] + depths[mid]) / 2.0
    }
}

pub fn mock_llm_query(scene: &Scene, question: &str, context: &str) -> String {
    if !context.trim().is_empty() {
        let key = normalize_question(&format!("{question} context: {context}"));
        if let Some(a) = scene.answer(&key) {
            return a.to_string();
        }
    }
    mock_simple_query(scene, question)
}

#[derive(Debug, Clone)]
pub struct MockToolkit {
    image: String,
    scene: Scene,
}

impl MockToolkit {
    pub fn new(image: impl Into<String>, scene: Scene) -> Self {
        Self { image: image.into(), scene }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }
}

impl PerceptionToolkit for MockToolkit {
    fn find(&self, patch: &Patch, name: &str) -> Result<Vec<Patch>> {
        Ok(mock_find(&self.scene, &self.image, patch, name))
    }

    fn exists(&self, patch: &Patch, name: &str) -> Result<bool> {
        Ok(mock_exists(&self.scene, patch, name))
    }

    fn verify_property(&self, patch: &Patch, name: &str, attribute: &str) -> Result<bool> {
        Ok(mock_verify_property(&self.scene, patch, name, attribute))
    }

    fn caption(&self, patch: &Patch) -> Result<String> {
        Ok(mock_caption(&self.scene, patch))
    }

    fn simple_query(&self, _patch: &Patch, question: &str) -> Result<String> {
        Ok(mock_simple_query(&self.scene, question))
    }

    fn compute_depth(&self, patch: &Patch) -> Result<f64> {
        Ok(mock_compute_depth(&self.scene, patch))
    }

    fn llm_query(&self, question: &str, context: &str) -> Result<String> {
        Ok(mock_llm_query(&self.scene, question, context))
    }

    fn crop(&self, patch: &Patch, bbox: BoundingBox) -> Result<Patch> {
        let inner = patch
            .bbox
            .intersection(&bbox)
            .ok_or_else(|| Error::Invalid(format!("crop {bbox} lies outside {}", patch.name)))?;
        Ok(Patch::new(&self.image, inner, "crop"))
    }

    fn root_patch(&self) -> Patch {
        Patch::new(&self.image, self.scene.full_box(), super::ROOT_PATCH)
    }
}
