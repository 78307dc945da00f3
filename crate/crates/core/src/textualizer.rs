//! Turns execution traces into feedback text and asks the summarizer for a verdict.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::llm::LlmBackend;
use crate::prompt::{fill_owned, PromptContext, PromptTemplates};
use crate::reasoner::{format_bool, EventDetail, ExecutionTrace, RuntimeValue, TraceEvent};
use crate::state::{Answer, FeedbackEntry};

/// Every template kind, with the placeholders it may use.
pub const TEMPLATE_KINDS: &[(&str, &[&str])] = &[
    ("find_one", &["object_name", "image_name"]),
    ("find_count", &["num", "object_name", "image_name"]),
    ("find_none", &["object_name"]),
    ("bbox", &["object_name", "current_img_no", "image_name", "bd_box_prediction"]),
    ("exists", &["object_name", "image_name", "exist_result"]),
    ("verify", &["category", "image_name", "verification_result"]),
    ("caption", &["image_name", "caption"]),
    ("simple_answer", &["image_name", "question", "query_answer"]),
    ("depth", &["image_name", "median_depth"]),
    ("llm_answer", &["query", "context", "return_answer"]),
    ("sort", &[]),
    ("middle", &["name"]),
    ("closest", &["name", "anchor_name"]),
    ("farthest", &["name", "anchor_name"]),
    ("variable", &["variable_name", "variable_value"]),
];

/// Closed set of feedback templates keyed by kind.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackTemplateSet {
    templates: BTreeMap<String, String>,
}

impl FeedbackTemplateSet {
    /// Parses `kind = template` lines; `#` lines and blanks are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut templates = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (kind, template) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Template(format!("line {}: expected `kind = template`", i + 1)))?;
            let kind = kind.trim();
            let allowed = TEMPLATE_KINDS
                .iter()
                .find(|(k, _)| *k == kind)
                .map(|(_, p)| *p)
                .ok_or_else(|| Error::Template(format!("unknown template kind `{kind}`")))?;
            for name in placeholders(template)? {
                if !allowed.contains(&name.as_str()) {
                    return Err(Error::Template(format!("template `{kind}` uses unknown placeholder {{{name}}}")));
                }
            }
            if templates.insert(kind.to_string(), template.to_string()).is_some() {
                return Err(Error::Template(format!("template `{kind}` defined twice")));
            }
        }
        if let Some((missing, _)) = TEMPLATE_KINDS.iter().find(|(k, _)| !templates.contains_key(*k)) {
            return Err(Error::Template(format!("no template for `{missing}`")));
        }
        Ok(Self { templates })
    }

    pub fn builtin() -> Self {
        Self::parse(&PromptTemplates::builtin().feedback).expect("shipped feedback templates are valid")
    }

    pub fn get(&self, kind: &str) -> Result<&str> {
        self.templates
            .get(kind)
            .map(String::as_str)
            .ok_or_else(|| Error::Template(format!("no template for `{kind}`")))
    }

    fn render(&self, kind: &str, values: &[(&str, String)]) -> Result<String> {
        substitute(self.get(kind)?, values)
    }
}

fn placeholders(template: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        let close = tail.find('}').ok_or_else(|| Error::Template(format!("unclosed brace in `{template}`")))?;
        out.push(tail[..close].to_string());
        rest = &tail[close + 1..];
    }
    Ok(out)
}

fn substitute(template: &str, values: &[(&str, String)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let close = tail.find('}').ok_or_else(|| Error::Template(format!("unclosed brace in `{template}`")))?;
        let name = &tail[..close];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .ok_or_else(|| Error::Template(format!("no value for {{{name}}}")))?;
        out.push_str(&value.1);
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn render_event(set: &FeedbackTemplateSet, event: &TraceEvent) -> Result<Vec<String>> {
    let s = |v: &str| v.to_string();
    let lines = match &event.detail {
        EventDetail::Find { object, image_name, patches } => {
            let mut lines = vec![match patches.len() {
                0 => set.render("find_none", &[("object_name", s(object))])?,
                1 => set.render("find_one", &[("object_name", s(object)), ("image_name", s(image_name))])?,
                n => set.render(
                    "find_count",
                    &[("num", n.to_string()), ("object_name", s(object)), ("image_name", s(image_name))],
                )?,
            }];
            for p in patches {
                let (label, k) = p.name_parts();
                lines.push(set.render(
                    "bbox",
                    &[
                        ("object_name", s(label)),
                        ("current_img_no", s(k)),
                        ("image_name", s(image_name)),
                        ("bd_box_prediction", p.bbox.to_string()),
                    ],
                )?);
            }
            lines
        }
        EventDetail::Exists { object, image_name, result } => vec![set.render(
            "exists",
            &[("object_name", s(object)), ("image_name", s(image_name)), ("exist_result", s(format_bool(*result)))],
        )?],
        EventDetail::Verify { category, image_name, result } => vec![set.render(
            "verify",
            &[
                ("category", s(category)),
                ("image_name", s(image_name)),
                ("verification_result", s(format_bool(*result))),
            ],
        )?],
        EventDetail::Caption { image_name, caption } => {
            vec![set.render("caption", &[("image_name", s(image_name)), ("caption", s(caption))])?]
        }
        EventDetail::SimpleQuery { image_name, question, answer } => vec![set.render(
            "simple_answer",
            &[("image_name", s(image_name)), ("question", s(question)), ("query_answer", s(answer))],
        )?],
        EventDetail::Depth { image_name, depth } => {
            vec![set.render("depth", &[("image_name", s(image_name)), ("median_depth", depth.to_string())])?]
        }
        EventDetail::LlmQuery { question, context, answer } => vec![set.render(
            "llm_answer",
            &[("query", s(question)), ("context", s(context)), ("return_answer", s(answer))],
        )?],
        EventDetail::Sort => vec![set.render("sort", &[])?],
        EventDetail::Middle { name } => vec![set.render("middle", &[("name", s(name))])?],
        EventDetail::Closest { name, anchor } => {
            vec![set.render("closest", &[("name", s(name)), ("anchor_name", s(anchor))])?]
        }
        EventDetail::Farthest { name, anchor } => {
            vec![set.render("farthest", &[("name", s(name)), ("anchor_name", s(anchor))])?]
        }
        EventDetail::Value => vec![set.render(
            "variable",
            &[("variable_name", s(&event.target)), ("variable_value", event.rendered_value())],
        )?],
    };
    Ok(lines)
}

/// Renders every event of `trace`, in order, one template per line.
pub fn render_feedback(set: &FeedbackTemplateSet, trace: &ExecutionTrace, step: usize) -> Result<FeedbackEntry> {
    if trace.events.is_empty() {
        return Err(Error::Invalid("cannot render feedback for a trace without events".into()));
    }
    let mut lines = Vec::new();
    for event in &trace.events {
        lines.extend(render_event(set, event)?);
    }
    FeedbackEntry::new(step, lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummaryVerdict {
    Answer(String),
    Continue,
}

pub fn build_summary_prompt(templates: &PromptTemplates, ctx: &PromptContext<'_>) -> Result<String> {
    fill_owned(&templates.summarizer, &ctx.values())
}

/// Maps a raw summarizer reply to a verdict. Empty replies count as `continue`.
pub fn parse_verdict(reply: &str) -> SummaryVerdict {
    let trimmed = reply.trim();
    let bare = trimmed.trim_matches(|c: char| c == '\'' || c == '"' || c == '.').trim();
    if bare.is_empty() || bare.eq_ignore_ascii_case("continue") {
        SummaryVerdict::Continue
    } else {
        SummaryVerdict::Answer(trimmed.to_string())
    }
}

pub fn summarize(templates: &PromptTemplates, ctx: &PromptContext<'_>, backend: &dyn LlmBackend) -> Result<SummaryVerdict> {
    let prompt = build_summary_prompt(templates, ctx)?;
    Ok(parse_verdict(&backend.complete(&prompt)?))
}

/// Box answer from the episode's `final_answer` value, if it holds a patch.
pub fn extract_grounding_answer(final_answer: Option<&RuntimeValue>) -> Answer {
    match final_answer {
        Some(RuntimeValue::Patch(p)) => Answer::Box { bbox: p.bbox },
        Some(RuntimeValue::PatchList(list)) => match list.first() {
            Some(p) => Answer::Box { bbox: p.bbox },
            None => Answer::Unanswered,
        },
        _ => Answer::Unanswered,
    }
}
