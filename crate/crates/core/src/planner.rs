//! Instruction generation: prompt assembly, LLM query and response parsing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::LlmBackend;
use crate::prompt::{fill_owned, PromptContext, PromptTemplates};
use crate::state::{InstructionSample, InstructionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlannerOutput {
    Instructions(InstructionSet),
    FinalAnswer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerResponse {
    pub raw: String,
    pub parsed: PlannerOutput,
    /// Backend calls spent, including parse retries.
    pub attempts: usize,
}

pub fn build_planner_prompt(templates: &PromptTemplates, ctx: &PromptContext<'_>, n: usize) -> Result<String> {
    if ctx.step == 0 || n == 0 {
        return Err(Error::Invalid("planner prompt needs step >= 1 and n >= 1".into()));
    }
    let mut values = ctx.values();
    values.push(("NUMBER_OF_SAMPLES", n.to_string()));
    values.push(("EXAMPLE", templates.planner_example(ctx.query.task_kind()).trim_end().to_string()));
    fill_owned(&templates.planner, &values)
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    line
}

fn parse_probability(s: &str) -> Option<f64> {
    let s = s.trim();
    let (num, scale) = match s.strip_suffix('%') {
        Some(p) => (p.trim(), 100.0),
        None => (s, 1.0),
    };
    let v: f64 = num.parse().ok()?;
    v.is_finite().then(|| (v / scale).clamp(0.0, 1.0))
}

fn parse_instruction_line(line: &str) -> Option<(String, f64)> {
    let body = strip_list_marker(line);
    let lower = body.to_ascii_lowercase();
    if let Some(open) = lower.rfind("(probability") {
        let inner = body[open + "(probability".len()..].trim_start();
        let inner = inner.strip_prefix(':').or_else(|| inner.strip_prefix('='))?;
        let close = inner.rfind(')')?;
        if !inner[close + 1..].trim().is_empty() {
            return None;
        }
        let p = parse_probability(&inner[..close])?;
        let text = body[..open].trim();
        return (!text.is_empty()).then(|| (text.to_string(), p));
    }
    let (text, p) = body.rsplit_once('|')?;
    let p = parse_probability(p)?;
    let text = text.trim();
    (!text.is_empty()).then(|| (text.to_string(), p))
}

fn final_answer_line(line: &str) -> Option<String> {
    let body = strip_list_marker(line);
    let prefix = "final answer:";
    if body.len() >= prefix.len() && body[..prefix.len()].eq_ignore_ascii_case(prefix) {
        let answer = body[prefix.len()..].trim();
        return (!answer.is_empty()).then(|| answer.to_string());
    }
    None
}

/// Reads `n` candidates written as `<text> (probability: p)` or `<text> | p`
/// (numbered or bulleted). Probabilities are clamped into [0, 1]. A line
/// starting with `Final answer:` short-circuits to a direct answer.
pub fn parse_instruction_list(raw: &str, n: usize, step: usize) -> Result<PlannerOutput> {
    if let Some(answer) = raw.lines().find_map(final_answer_line) {
        return Ok(PlannerOutput::FinalAnswer(answer));
    }
    let parsed: Vec<(String, f64)> = raw.lines().filter_map(parse_instruction_line).take(n).collect();
    if parsed.len() < n {
        return Err(Error::PlannerParse(format!("found {} of {n} instruction lines", parsed.len())));
    }
    let samples = parsed
        .into_iter()
        .map(|(text, p)| InstructionSample::new(text, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlannerOutput::Instructions(InstructionSet::new(samples, step, n)?))
}

/// Queries the backend until its reply parses, at most `retry_limit` times.
pub fn generate_instructions(
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    n: usize,
    backend: &dyn LlmBackend,
    retry_limit: usize,
) -> Result<PlannerResponse> {
    let prompt = build_planner_prompt(templates, ctx, n)?;
    let mut last_err = Error::PlannerParse("no attempts made".into());
    for attempt in 1..=retry_limit.max(1) {
        let raw = backend.complete(&prompt)?;
        match parse_instruction_list(&raw, n, ctx.step) {
            Ok(parsed) => return Ok(PlannerResponse { raw, parsed, attempts: attempt }),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::prompt::remaining_placeholders;
    use crate::state::{FeedbackEntry, MetaInfo, Query, StateMemory, TaskKind};
    use proptest::prelude::*;

    fn query() -> Query {
        Query::new("Is the girl on the right wearing a hat?", "scene.json", TaskKind::Vqa).unwrap()
    }

    #[test]
    fn first_step_prompt() {
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let p = build_planner_prompt(&PromptTemplates::builtin(), &ctx, 5).unwrap();
        assert!(p.contains("Current Step: 1"));
        assert!(p.contains("provide 5 alternative instructions"));
        assert!(p.contains("All Previously Taken Instruction:\n\n\n"));
        assert!(remaining_placeholders(&p).is_empty());
    }

    #[test]
    fn prompt_carries_history() {
        let (q, meta) = (query(), MetaInfo::for_task(TaskKind::Vqa));
        let mut mem = StateMemory::new();
        mem.append(
            InstructionSample::new("find girls", 0.9).unwrap(),
            "girls = image_patch.find(\"girl\")",
            FeedbackEntry::new(1, "Detection result: 2 girl have been detected in image_patch.").unwrap(),
            vec![],
        )
        .unwrap();
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 2 };
        let p = build_planner_prompt(&PromptTemplates::builtin(), &ctx, 3).unwrap();
        assert!(p.contains("1. find girls"));
        assert!(p.contains("girls = image_patch.find(\"girl\")"));
        assert!(p.contains("Current Step: 2"));
        assert!(remaining_placeholders(&p).is_empty());
    }

    #[test]
    fn parses_numbered_probability_lines() {
        let raw = "Here you go:\n1. find girls (probability: 0.9)\n2. caption image (probability: 0.4)\n\
                   3) count the girls (Probability: 0.3)\n- ask about hats | 0.2\n5. verify the right girl (probability: 1.7)";
        let PlannerOutput::Instructions(set) = parse_instruction_list(raw, 5, 1).unwrap() else { panic!() };
        assert_eq!(set.confidences(), vec![0.9, 0.4, 0.3, 0.2, 1.0]);
        assert_eq!(set.samples()[0].text(), "find girls");
        assert_eq!(set.samples()[3].text(), "ask about hats");
    }

    #[test]
    fn final_answer_prefix() {
        assert_eq!(parse_instruction_list("Final answer: two", 5, 1).unwrap(), PlannerOutput::FinalAnswer("two".into()));
        assert_eq!(parse_instruction_list("FINAL ANSWER:  yellow ", 5, 1).unwrap(), PlannerOutput::FinalAnswer("yellow".into()));
    }

    #[test]
    fn too_few_lines_is_parse_error() {
        let err = parse_instruction_list("1. a (probability: 0.5)\nnonsense", 5, 1).unwrap_err();
        assert!(matches!(err, Error::PlannerParse(_)));
    }

    fn five_lines() -> String {
        (1..=5).map(|i| format!("instruction {i} | 0.{i}")).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn generate_from_scripted_backend() {
        let backend = ScriptedBackend::new("mock", [five_lines()]);
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let r = generate_instructions(&PromptTemplates::builtin(), &ctx, 5, &backend, 3).unwrap();
        let PlannerOutput::Instructions(set) = r.parsed else { panic!() };
        assert_eq!(set.len(), 5);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn generate_final_answer_shortcut() {
        let backend = ScriptedBackend::new("mock", ["Final answer: yellow"]);
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let r = generate_instructions(&PromptTemplates::builtin(), &ctx, 5, &backend, 3).unwrap();
        assert_eq!(r.parsed, PlannerOutput::FinalAnswer("yellow".into()));
    }

    #[test]
    fn garbage_three_times_is_parse_error() {
        let backend = ScriptedBackend::new("mock", ["???", "no idea", "blah"]);
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let err = generate_instructions(&PromptTemplates::builtin(), &ctx, 5, &backend, 3).unwrap_err();
        assert!(matches!(err, Error::PlannerParse(_)));
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn garbage_then_valid_recovers() {
        let backend = ScriptedBackend::new("mock", ["???".to_string(), five_lines()]);
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let r = generate_instructions(&PromptTemplates::builtin(), &ctx, 5, &backend, 3).unwrap();
        assert_eq!(r.attempts, 2);
    }

    #[test]
    fn transport_failure_is_backend_unavailable() {
        let backend = ScriptedBackend::with_results("mock", [Err("connection refused".to_string())]);
        let (q, mem, meta) = (query(), StateMemory::new(), MetaInfo::for_task(TaskKind::Vqa));
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let err = generate_instructions(&PromptTemplates::builtin(), &ctx, 5, &backend, 3).unwrap_err();
        assert!(matches!(err, Error::BackendUnavailable(_)));
    }

    proptest! {
        #[test]
        fn serialized_sets_reparse_equal(
            texts in prop::collection::vec("[a-z][a-z ]{0,20}[a-z]", 5),
            probs in prop::collection::vec(0.0f64..=1.0, 5),
        ) {
            let samples: Vec<_> = texts.iter().zip(&probs).map(|(t, p)| InstructionSample::new(t.clone(), *p).unwrap()).collect();
            let set = InstructionSet::new(samples, 3, 5).unwrap();
            let reparsed = parse_instruction_list(&set.to_lines(), 5, 3).unwrap();
            prop_assert_eq!(reparsed, PlannerOutput::Instructions(set));
        }

        #[test]
        fn parsed_sets_respect_invariants(lines in prop::collection::vec(("[a-z ]{1,12}", -5.0f64..5.0), 0..8)) {
            let raw = lines.iter().map(|(t, p)| format!("{t} | {p}")).collect::<Vec<_>>().join("\n");
            if let Ok(PlannerOutput::Instructions(set)) = parse_instruction_list(&raw, 5, 1) {
                prop_assert_eq!(set.len(), 5);
                prop_assert!(set.confidences().iter().all(|c| (0.0..=1.0).contains(c)));
            }
        }
    }
}
