//! Prompt templates with `[UPPER_SNAKE]` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::state::{MetaInfo, Query, StateMemory, TaskKind};

/// Inputs shared by the planner, code and summarizer prompts.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub query: &'a Query,
    pub memory: &'a StateMemory,
    pub meta: &'a MetaInfo,
    pub step: usize,
}

pub fn query_type(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Vqa => "visual question answering",
        TaskKind::Grounding => "visual grounding",
    }
}

impl PromptContext<'_> {
    /// Values for the placeholders every prompt shares.
    pub fn values(&self) -> Vec<(&'static str, String)> {
        let r = self.memory.render();
        vec![
            ("META_INFO", self.meta.render()),
            ("QUERY", self.query.text().to_string()),
            ("QUERY_TYPE", query_type(self.query.task_kind()).to_string()),
            ("CURRENT_STEP_NUM", self.step.to_string()),
            ("INSTRUCTION_HISTORY", r.instruction_history),
            ("CODE_HISTORY", r.code_history),
            ("VARIABLE_AND_DETAILS", r.variables),
            ("FEEDBACK_HISTORY", r.feedback_history),
        ]
    }
}

/// [`fill`] with owned values.
pub fn fill_owned(template: &str, values: &[(&str, String)]) -> Result<String> {
    let borrowed: Vec<(&str, &str)> = values.iter().map(|(k, v)| (*k, v.as_str())).collect();
    fill(template, &borrowed)
}

/// Every prompt and text fixture the loop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub planner: String,
    pub coder: String,
    pub summarizer: String,
    pub api_reference: String,
    pub feedback: String,
    pub planner_examples: BTreeMap<TaskKind, String>,
    pub coder_examples: BTreeMap<TaskKind, String>,
}

macro_rules! builtin {
    ($file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $file))
    };
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            planner: builtin!("planner.txt").to_string(),
            coder: builtin!("coder.txt").to_string(),
            summarizer: builtin!("summarizer.txt").to_string(),
            api_reference: builtin!("api_reference.txt").to_string(),
            feedback: builtin!("feedback.txt").to_string(),
            planner_examples: BTreeMap::from([
                (TaskKind::Vqa, builtin!("example_planner_vqa.txt").to_string()),
                (TaskKind::Grounding, builtin!("example_planner_grounding.txt").to_string()),
            ]),
            coder_examples: BTreeMap::from([
                (TaskKind::Vqa, builtin!("example_coder_vqa.txt").to_string()),
                (TaskKind::Grounding, builtin!("example_coder_grounding.txt").to_string()),
            ]),
        }
    }

    /// Loads every template file from `dir`; a missing file is a config error.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("missing template {}: {e}", path.display())))
        };
        let mut planner_examples = BTreeMap::new();
        let mut coder_examples = BTreeMap::new();
        for task in [TaskKind::Vqa, TaskKind::Grounding] {
            planner_examples.insert(task, read(&format!("example_planner_{}.txt", task.as_str()))?);
            coder_examples.insert(task, read(&format!("example_coder_{}.txt", task.as_str()))?);
        }
        Ok(Self {
            planner: read("planner.txt")?,
            coder: read("coder.txt")?,
            summarizer: read("summarizer.txt")?,
            api_reference: read("api_reference.txt")?,
            feedback: read("feedback.txt")?,
            planner_examples,
            coder_examples,
        })
    }

    pub fn planner_example(&self, task: TaskKind) -> &str {
        self.planner_examples.get(&task).map(String::as_str).unwrap_or("")
    }

    pub fn coder_example(&self, task: TaskKind) -> &str {
        self.coder_examples.get(&task).map(String::as_str).unwrap_or("")
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

fn placeholder_at(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('[')?;
    let end = rest.find(']')?;
    let name = &rest[..end];
    let ok = !name.is_empty()
        && name.bytes().all(|b| b.is_ascii_uppercase() || b == b'_')
        && name.bytes().any(|b| b.is_ascii_uppercase());
    ok.then_some(end + 2)
}

/// Substitutes `[NAME]` tokens in one left-to-right pass; inserted values
/// are never rescanned. Unknown placeholders are an error.
pub fn fill(template: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(pos) = rest.find('[') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match placeholder_at(tail) {
            Some(len) => {
                let name = &tail[1..len - 1];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Template(format!("no value for placeholder [{name}]")))?;
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder tokens (`[UPPER_SNAKE]`) still present in `text`.
pub fn remaining_placeholders(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    for (i, _) in text.match_indices('[') {
        if let Some(len) = placeholder_at(&text[i..]) {
            found.push(text[i..i + len].to_string());
        }
    }
    found
}
