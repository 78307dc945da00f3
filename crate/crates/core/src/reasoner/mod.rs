//! Code generation and execution for the chosen instruction.

mod ast;
mod interpreter;
mod parser;
pub mod skills;
mod value;

pub use ast::{pretty_print, ActionScript, Expr, Literal, Statement, FINAL_ANSWER};
pub use interpreter::{interpret, EventDetail, ExecError, ExecutionTrace, Session, TraceEvent};
pub use parser::{parse_script, ParseError};
pub use value::{format_bool, RuntimeValue};

use crate::error::Result;
use crate::llm::LlmBackend;
use crate::perception::PerceptionToolkit;
use crate::prompt::{fill_owned, PromptContext, PromptTemplates};
use crate::state::InstructionSample;

pub fn build_code_prompt(
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    instruction: &InstructionSample,
) -> Result<String> {
    let mut values = ctx.values();
    values.push(("PYTHON_API_CODE", templates.api_reference.trim_end().to_string()));
    values.push(("EXAMPLE", templates.coder_example(ctx.query.task_kind()).trim_end().to_string()));
    values.push(("CURRENT_INSTRUCTION", instruction.text().to_string()));
    fill_owned(&templates.coder, &values)
}

/// Pulls the code out of a completion, dropping markdown fences.
pub fn extract_code(reply: &str) -> String {
    let mut in_fence = false;
    let mut fenced = Vec::new();
    let mut saw_fence = false;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            saw_fence = true;
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            fenced.push(line);
        }
    }
    if saw_fence {
        fenced.join("\n")
    } else {
        reply.trim().to_string()
    }
}

#[derive(Debug, Clone)]
pub struct CodeAttempt {
    pub prompt: String,
    pub reply: String,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Clone)]
pub struct ReasonerOutcome {
    /// Source of the last attempt.
    pub script: String,
    pub trace: ExecutionTrace,
    pub attempts: Vec<CodeAttempt>,
}

impl ReasonerOutcome {
    pub fn succeeded(&self) -> bool {
        self.trace.is_ok()
    }
}

fn failure_trace(message: String) -> ExecutionTrace {
    ExecutionTrace { error: Some(ExecError { statement: 0, message }), ..Default::default() }
}

/// Generates, parses and runs code for `instruction`, feeding each failure
/// back into the prompt, for at most `retry_limit` attempts. Variables are
/// committed to `session` only by a successful attempt.
pub fn generate_and_execute(
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    instruction: &InstructionSample,
    backend: &dyn LlmBackend,
    toolkit: &dyn PerceptionToolkit,
    session: &mut Session,
    retry_limit: usize,
) -> Result<ReasonerOutcome> {
    let base = build_code_prompt(templates, ctx, instruction)?;
    let mut prompt = base.clone();
    let mut attempts = Vec::new();
    let mut script = String::new();
    let mut trace = failure_trace("no attempt made".into());
    for _ in 0..retry_limit.max(1) {
        let reply = backend.complete(&prompt)?;
        script = extract_code(&reply);
        trace = match parse_script(&script) {
            Ok(parsed) if parsed.statements().is_empty() => failure_trace("the code contains no statements".into()),
            Ok(parsed) => session.execute(&parsed, toolkit),
            Err(e) => failure_trace(e.to_string()),
        };
        attempts.push(CodeAttempt { prompt: prompt.clone(), reply, trace: trace.clone() });
        match trace.error_message() {
            None => break,
            Some(msg) => {
                prompt = format!(
                    "{base}\n\nThe previous code for this instruction failed.\nPrevious code:\n{script}\nError: {msg}\nReturn corrected code for the Current Instruction.\n"
                );
            }
        }
    }
    Ok(ReasonerOutcome { script, trace, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::perception::{MockToolkit, Scene};
    use crate::prompt::remaining_placeholders;
    use crate::state::{FeedbackEntry, MetaInfo, Query, StateMemory, TaskKind};

    fn toolkit() -> MockToolkit {
        let scene = Scene::from_json(
            r#"{"width": 100, "height": 40, "objects": [{"name": "bus", "box": [70, 0, 100, 40], "depth": 5}],
                "qa": {"what color is the bus?": "yellow"}}"#,
        )
        .unwrap();
        MockToolkit::new("bus.json", scene)
    }

    fn setup() -> (Query, StateMemory, MetaInfo) {
        (
            Query::new("What color is the bus?", "bus.json", TaskKind::Vqa).unwrap(),
            StateMemory::new(),
            MetaInfo::for_task(TaskKind::Vqa),
        )
    }

    #[test]
    fn prompt_substitutes_instruction() {
        let (q, mem, meta) = setup();
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let d = InstructionSample::new("find girls", 0.8).unwrap();
        let p = build_code_prompt(&PromptTemplates::builtin(), &ctx, &d).unwrap();
        assert!(p.contains("Current Instruction: find girls"));
        assert!(p.contains("sort_horizontal(patches: list[ImagePatch])"));
        assert!(remaining_placeholders(&p).is_empty());
    }

    #[test]
    fn prompt_includes_prior_code() {
        let (q, mut mem, meta) = setup();
        let code = "buses = image_patch.find(\"bus\")";
        mem.append(InstructionSample::new("find buses", 0.5).unwrap(), code, FeedbackEntry::new(1, "x").unwrap(), vec![])
            .unwrap();
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 2 };
        let d = InstructionSample::new("ask the color", 0.8).unwrap();
        let p = build_code_prompt(&PromptTemplates::builtin(), &ctx, &d).unwrap();
        assert!(p.contains(code));
        assert!(remaining_placeholders(&p).is_empty());
    }

    #[test]
    fn api_reference_lists_every_skill() {
        let api = PromptTemplates::builtin().api_reference;
        for s in skills::SKILLS {
            assert!(api.contains(&format!("{}(", s.name)), "{} missing from api reference", s.name);
        }
        let meta = MetaInfo::for_task(TaskKind::Vqa);
        assert_eq!(meta.skills().len(), skills::SKILLS.len());
    }

    fn run(backend: &ScriptedBackend) -> ReasonerOutcome {
        let (q, mem, meta) = setup();
        let ctx = PromptContext { query: &q, memory: &mem, meta: &meta, step: 1 };
        let tk = toolkit();
        let mut session = Session::new(tk.root_patch());
        let d = InstructionSample::new("ask the color of the bus", 0.8).unwrap();
        generate_and_execute(&PromptTemplates::builtin(), &ctx, &d, backend, &tk, &mut session, 3).unwrap()
    }

    #[test]
    fn valid_first_try() {
        let b = ScriptedBackend::new("coder", ["```\nfinal_answer = image_patch.simple_query(\"what color is the bus?\")\n```"]);
        let out = run(&b);
        assert!(out.succeeded());
        assert_eq!(out.attempts.len(), 1);
        assert_eq!(out.trace.env["final_answer"], RuntimeValue::Text("yellow".into()));
    }

    #[test]
    fn broken_then_fixed() {
        let b = ScriptedBackend::new(
            "coder",
            ["final_answer = image_patch.simple_query(", "final_answer = image_patch.simple_query(\"what color is the bus?\")"],
        );
        let out = run(&b);
        assert!(out.succeeded());
        assert_eq!(out.attempts.len(), 2);
        assert!(b.prompts()[1].contains("syntax error at line 1"));
    }

    #[test]
    fn broken_three_times_keeps_error() {
        let b = ScriptedBackend::new("coder", ["x = nope"]);
        let out = run(&b);
        assert!(!out.succeeded());
        assert_eq!(out.attempts.len(), 3);
        assert_eq!(b.calls(), 3);
    }
}
