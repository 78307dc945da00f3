use std::fmt;

use serde::{Deserialize, Serialize};

use crate::perception::Patch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum RuntimeValue {
    Patch(Patch),
    PatchList(Vec<Patch>),
    Text(String),
    Number(f64),
    Boolean(bool),
}

impl RuntimeValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            RuntimeValue::Patch(_) => "patch",
            RuntimeValue::PatchList(_) => "patch list",
            RuntimeValue::Text(_) => "text",
            RuntimeValue::Number(_) => "number",
            RuntimeValue::Boolean(_) => "boolean",
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            RuntimeValue::Boolean(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_number(self) -> Option<f64> {
        match self {
            RuntimeValue::Number(n) => Some(n),
            _ => None,
        }
    }

    pub fn into_text(self) -> Option<String> {
        match self {
            RuntimeValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub fn format_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn write_patch(f: &mut fmt::Formatter<'_>, p: &Patch) -> fmt::Result {
    write!(f, "{} {}", p.name, p.bbox)
}

/// Textualized value as stored in state memory.
impl fmt::Display for RuntimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeValue::Patch(p) => write_patch(f, p),
            RuntimeValue::PatchList(list) => {
                f.write_str("[")?;
                for (i, p) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_patch(f, p)?;
                }
                f.write_str("]")
            }
            RuntimeValue::Text(s) => f.write_str(s),
            RuntimeValue::Number(n) => write!(f, "{n}"),
            RuntimeValue::Boolean(b) => f.write_str(format_bool(*b)),
        }
    }
}
