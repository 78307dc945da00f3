//! Perception toolkit: the skill implementations behind action scripts.

mod http;
mod mock;
mod scene;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{HttpToolkit, HttpToolkitConfig, HttpToolkitProvider};
pub use mock::{mock_caption, mock_compute_depth, mock_exists, mock_find, mock_llm_query, mock_simple_query, mock_verify_property, MockToolkit};
pub use scene::{Scene, SceneObject};

use crate::error::Result;
use crate::state::BoundingBox;

/// Identifier bound to the full-image patch in every script.
pub const ROOT_PATCH: &str = "image_patch";

/// A region of an image with a display name unique within the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub image: String,
    pub bbox: BoundingBox,
    pub name: String,
}

impl Patch {
    pub fn new(image: impl Into<String>, bbox: BoundingBox, name: impl Into<String>) -> Self {
        Self { image: image.into(), bbox, name: name.into() }
    }

    /// Splits `girl_2` into `("girl", "2")`; names without a numeric suffix
    /// return the whole name and an empty number.
    pub fn name_parts(&self) -> (&str, &str) {
        match self.name.rsplit_once('_') {
            Some((label, k)) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => (label, k),
            _ => (self.name.as_str(), ""),
        }
    }
}

/// Read-only skill backend. `find` names its patches `{name}_{k}` with `k`
/// counted from 1 per call; callers may renumber for episode uniqueness.
pub trait PerceptionToolkit: Send + Sync {
    fn find(&self, patch: &Patch, name: &str) -> Result<Vec<Patch>>;
    fn exists(&self, patch: &Patch, name: &str) -> Result<bool>;
    fn verify_property(&self, patch: &Patch, name: &str, attribute: &str) -> Result<bool>;
    fn caption(&self, patch: &Patch) -> Result<String>;
    fn simple_query(&self, patch: &Patch, question: &str) -> Result<String>;
    fn compute_depth(&self, patch: &Patch) -> Result<f64>;
    fn llm_query(&self, question: &str, context: &str) -> Result<String>;
    fn crop(&self, patch: &Patch, bbox: BoundingBox) -> Result<Patch>;
    /// Patch covering the whole image.
    fn root_patch(&self) -> Patch;
}

/// Builds a toolkit for one image reference.
pub trait ToolkitProvider: Send + Sync {
    fn toolkit_for(&self, image_ref: &str) -> Result<Arc<dyn PerceptionToolkit>>;
}

/// Loads scene files from a directory; image references are paths relative to it.
#[derive(Debug, Clone)]
pub struct SceneDirProvider {
    pub dir: PathBuf,
}

impl ToolkitProvider for SceneDirProvider {
    fn toolkit_for(&self, image_ref: &str) -> Result<Arc<dyn PerceptionToolkit>> {
        let scene = Scene::load(self.dir.join(image_ref))?;
        Ok(Arc::new(MockToolkit::new(image_ref, scene)))
    }
}

/// Intersection over union; zero when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Unit-cell rasterization: counts covered pixels on the integer grid.
    fn raster_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
        let (mut inter, mut union) = (0u32, 0u32);
        for x in 0..64 {
            for y in 0..64 {
                let ina = x >= a[0] && x < a[2] && y >= a[1] && y < a[3];
                let inb = x >= b[0] && x < b[2] && y >= b[1] && y < b[3];
                inter += (ina && inb) as u32;
                union += (ina || inb) as u32;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn identical_and_disjoint() {
        let a = bx(1.0, 2.0, 5.0, 9.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(10.0, 10.0, 12.0, 12.0)), 0.0);
    }

    #[test]
    fn overlapping_squares_give_one_seventh() {
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
        assert!((raster_iou([0, 0, 2, 2], [1, 1, 3, 3]) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_union_is_zero() {
        let p = bx(3.0, 3.0, 3.0, 3.0);
        assert_eq!(iou(&p, &p), 0.0);
    }

    fn int_box() -> impl Strategy<Value = [i32; 4]> {
        (0..64i32, 0..64i32, 0..64i32, 0..64i32).prop_map(|(a, b, c, d)| [a.min(c), b.min(d), a.max(c), b.max(d)])
    }

    proptest! {
        #[test]
        fn matches_rasterization(a in int_box(), b in int_box()) {
            let fa = bx(a[0] as f64, a[1] as f64, a[2] as f64, a[3] as f64);
            let fb = bx(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64);
            let v = iou(&fa, &fb);
            prop_assert!((v - raster_iou(a, b)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&fb, &fa));
        }
    }

    #[test]
    fn name_parts_split_numeric_suffix() {
        let p = Patch::new("s", bx(0.0, 0.0, 1.0, 1.0), "traffic_light_3");
        assert_eq!(p.name_parts(), ("traffic_light", "3"));
        let root = Patch::new("s", bx(0.0, 0.0, 1.0, 1.0), ROOT_PATCH);
        assert_eq!(root.name_parts(), ("image_patch", ""));
    }
}
