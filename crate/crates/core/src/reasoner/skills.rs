//! The skill registry callable from action scripts.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallForm {
    /// `patch.skill(args)`
    Method,
    /// `skill(args)`
    Function,
}

#[derive(Debug, Clone, Copy)]
pub struct Skill {
    pub name: &'static str,
    pub form: CallForm,
    pub signature: &'static str,
    pub capability: &'static str,
    pub usage: &'static str,
}

pub const SKILLS: &[Skill] = &[
    Skill {
        name: "find",
        form: CallForm::Method,
        signature: "patch.find(object_name: str) -> list[patch]",
        capability: "Detects every instance of the named object inside the patch, ordered left to right.",
        usage: "girls = image_patch.find(\"girl\")",
    },
    Skill {
        name: "exists",
        form: CallForm::Method,
        signature: "patch.exists(object_name: str) -> bool",
        capability: "Checks whether the named object appears inside the patch.",
        usage: "has_bus = image_patch.exists(\"bus\")",
    },
    Skill {
        name: "verify_property",
        form: CallForm::Method,
        signature: "patch.verify_property(object_name: str, property: str) -> bool",
        capability: "Checks whether an object inside the patch has the given property.",
        usage: "is_red = image_patch.verify_property(\"bus\", \"red\")",
    },
    Skill {
        name: "caption",
        form: CallForm::Method,
        signature: "patch.caption() -> str",
        capability: "Describes the content of the patch in one sentence.",
        usage: "description = image_patch.caption()",
    },
    Skill {
        name: "simple_query",
        form: CallForm::Method,
        signature: "patch.simple_query(question: str) -> str",
        capability: "Answers a simple visual question about the patch.",
        usage: "color = bus.simple_query(\"what color is the bus?\")",
    },
    Skill {
        name: "compute_depth",
        form: CallForm::Method,
        signature: "patch.compute_depth() -> float",
        capability: "Returns the median depth of the patch; larger values are farther away.",
        usage: "depth = girl_patch.compute_depth()",
    },
    Skill {
        name: "crop",
        form: CallForm::Method,
        signature: "patch.crop(x1: float, y1: float, x2: float, y2: float) -> patch",
        capability: "Returns the sub-patch inside the given pixel box.",
        usage: "left_half = image_patch.crop(0, 0, 320, 480)",
    },
    Skill {
        name: "llm_query",
        form: CallForm::Function,
        signature: "llm_query(question: str, context: str = \"\") -> str",
        capability: "Answers a question with external knowledge, optionally given context.",
        usage: "fact = llm_query(\"what country is this food from?\", \"pizza\")",
    },
    Skill {
        name: "sort_horizontal",
        form: CallForm::Function,
        signature: "sort_horizontal(patches: list[patch]) -> list[patch]",
        capability: "Sorts patches from left to right.",
        usage: "ordered = sort_horizontal(girls)",
    },
    Skill {
        name: "middle",
        form: CallForm::Function,
        signature: "middle(patches: list[patch]) -> patch",
        capability: "Returns the middle patch of the list.",
        usage: "center_girl = middle(ordered)",
    },
    Skill {
        name: "closest",
        form: CallForm::Function,
        signature: "closest(patches: list[patch], anchor: patch = camera) -> patch",
        capability: "Returns the patch closest to the anchor patch, or to the camera when no anchor is given.",
        usage: "near_girl = closest(girls, bus)",
    },
    Skill {
        name: "farthest",
        form: CallForm::Function,
        signature: "farthest(patches: list[patch], anchor: patch = camera) -> patch",
        capability: "Returns the patch farthest from the anchor patch, or from the camera when no anchor is given.",
        usage: "far_girl = farthest(girls)",
    },
    Skill {
        name: "count",
        form: CallForm::Function,
        signature: "count(patches: list[patch]) -> int",
        capability: "Returns the number of patches in the list.",
        usage: "num_girls = count(girls)",
    },
];

pub fn lookup(name: &str) -> Option<&'static Skill> {
    SKILLS.iter().find(|s| s.name == name)
}
