//! Tree-walking interpreter for action scripts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{ActionScript, Expr, Literal, Statement};
use super::skills::{self, CallForm};
use super::value::RuntimeValue;
use crate::perception::{Patch, PerceptionToolkit, ROOT_PATCH};
use crate::state::BoundingBox;

/// What a statement did, with the data its feedback template needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventDetail {
    Find { object: String, image_name: String, patches: Vec<Patch> },
    Exists { object: String, image_name: String, result: bool },
    Verify { category: String, image_name: String, result: bool },
    Caption { image_name: String, caption: String },
    SimpleQuery { image_name: String, question: String, answer: String },
    Depth { image_name: String, depth: f64 },
    LlmQuery { question: String, context: String, answer: String },
    Sort,
    Middle { name: String },
    Closest { name: String, anchor: String },
    Farthest { name: String, anchor: String },
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub statement: usize,
    pub target: String,
    /// Skill name, or `literal` / `variable` / `index` for non-calls.
    pub skill: String,
    pub value: RuntimeValue,
    pub detail: EventDetail,
}

impl TraceEvent {
    pub fn rendered_value(&self) -> String {
        self.value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecError {
    pub statement: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    /// Last value assigned to each name by this script.
    pub env: BTreeMap<String, RuntimeValue>,
    pub error: Option<ExecError>,
}

impl ExecutionTrace {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Assigned names in first-assignment order with their last value.
    pub fn assignments(&self) -> Vec<(String, RuntimeValue)> {
        let mut out: Vec<(String, RuntimeValue)> = Vec::new();
        for e in &self.events {
            match out.iter_mut().find(|(n, _)| *n == e.target) {
                Some(slot) => slot.1 = e.value.clone(),
                None => out.push((e.target.clone(), e.value.clone())),
            }
        }
        out
    }

    pub fn error_message(&self) -> Option<String> {
        self.error.as_ref().map(|e| format!("statement {}: {}", e.statement + 1, e.message))
    }
}

/// Episode-scoped execution context: variables persist across steps and
/// patch names stay unique for the whole episode.
#[derive(Debug, Clone)]
pub struct Session {
    env: BTreeMap<String, RuntimeValue>,
    counters: BTreeMap<String, usize>,
}

type Eval<T> = std::result::Result<T, String>;

impl Session {
    pub fn new(root: Patch) -> Self {
        let mut env = BTreeMap::new();
        env.insert(ROOT_PATCH.to_string(), RuntimeValue::Patch(root));
        Self { env, counters: BTreeMap::new() }
    }

    pub fn get(&self, name: &str) -> Option<&RuntimeValue> {
        self.env.get(name)
    }

    /// Runs the script; variables are committed only when every statement succeeds.
    pub fn execute(&mut self, script: &ActionScript, toolkit: &dyn PerceptionToolkit) -> ExecutionTrace {
        let mut scratch = self.clone();
        let mut trace = ExecutionTrace::default();
        for (i, stmt) in script.statements().iter().enumerate() {
            match scratch.statement(stmt, toolkit) {
                Ok((value, skill, detail)) => {
                    scratch.env.insert(stmt.target.clone(), value.clone());
                    trace.env.insert(stmt.target.clone(), value.clone());
                    trace.events.push(TraceEvent { statement: i, target: stmt.target.clone(), skill, value, detail });
                }
                Err(message) => {
                    trace.error = Some(ExecError { statement: i, message });
                    return trace;
                }
            }
        }
        *self = scratch;
        trace
    }

    fn next_name(&mut self, label: &str) -> String {
        let k = self.counters.entry(label.to_string()).or_insert(0);
        *k += 1;
        format!("{label}_{k}")
    }

    fn statement(&mut self, stmt: &Statement, tk: &dyn PerceptionToolkit) -> Eval<(RuntimeValue, String, EventDetail)> {
        match &stmt.expr {
            Expr::Call { receiver, name, args } => {
                let (value, detail) = self.call(receiver.as_deref(), name, args, tk)?;
                Ok((value, name.clone(), detail))
            }
            Expr::Literal(_) => Ok((self.eval(&stmt.expr, tk)?, "literal".into(), EventDetail::Value)),
            Expr::Var(_) => Ok((self.eval(&stmt.expr, tk)?, "variable".into(), EventDetail::Value)),
            Expr::Index(..) => Ok((self.eval(&stmt.expr, tk)?, "index".into(), EventDetail::Value)),
        }
    }

    fn lookup(&self, name: &str) -> Eval<&RuntimeValue> {
        self.env.get(name).ok_or_else(|| format!("name `{name}` is not defined"))
    }

    fn eval(&mut self, expr: &Expr, tk: &dyn PerceptionToolkit) -> Eval<RuntimeValue> {
        match expr {
            Expr::Literal(Literal::Str(s)) => Ok(RuntimeValue::Text(s.clone())),
            Expr::Literal(Literal::Num(n)) => Ok(RuntimeValue::Number(*n)),
            Expr::Literal(Literal::Bool(b)) => Ok(RuntimeValue::Boolean(*b)),
            Expr::Var(name) => self.lookup(name).cloned(),
            Expr::Index(name, idx) => match self.lookup(name)? {
                RuntimeValue::PatchList(list) => list.get(*idx).cloned().map(RuntimeValue::Patch).ok_or_else(|| {
                    format!("index {idx} out of range for `{name}` ({} patches)", list.len())
                }),
                other => Err(format!("cannot index `{name}` of type {}", other.type_name())),
            },
            Expr::Call { receiver, name, args } => Ok(self.call(receiver.as_deref(), name, args, tk)?.0),
        }
    }

    fn call(
        &mut self,
        receiver: Option<&str>,
        name: &str,
        args: &[Expr],
        tk: &dyn PerceptionToolkit,
    ) -> Eval<(RuntimeValue, EventDetail)> {
        let skill = skills::lookup(name).ok_or_else(|| format!("unknown skill `{name}`"))?;
        let values = args.iter().map(|a| self.eval(a, tk)).collect::<Eval<Vec<_>>>()?;
        let args = Args { skill: name, values };
        match (skill.form, receiver) {
            (CallForm::Method, None) => return Err(format!("`{name}` must be called on a patch, e.g. image_patch.{name}(...)")),
            (CallForm::Function, Some(r)) => return Err(format!("`{name}` is a function; call it as {name}(...) not {r}.{name}(...)")),
            _ => {}
        }
        let patch = match receiver {
            Some(r) => match self.lookup(r)? {
                RuntimeValue::Patch(p) => Some(p.clone()),
                other => return Err(format!("`{r}` is a {}, not a patch", other.type_name())),
            },
            None => None,
        };
        let tk_err = |e: crate::error::Error| format!("{name} failed: {e}");
        match (name, patch) {
            ("find", Some(p)) => {
                args.arity(1, 1)?;
                let object = args.text(0)?;
                let found = tk.find(&p, &object).map_err(tk_err)?;
                let patches: Vec<Patch> = found
                    .into_iter()
                    .map(|mut f| {
                        let label = f.name_parts().0.to_string();
                        f.name = self.next_name(&label);
                        f
                    })
                    .collect();
                let detail = EventDetail::Find { object, image_name: p.name.clone(), patches: patches.clone() };
                Ok((RuntimeValue::PatchList(patches), detail))
            }
            ("exists", Some(p)) => {
                args.arity(1, 1)?;
                let object = args.text(0)?;
                let result = tk.exists(&p, &object).map_err(tk_err)?;
                Ok((RuntimeValue::Boolean(result), EventDetail::Exists { object, image_name: p.name, result }))
            }
            ("verify_property", Some(p)) => {
                args.arity(2, 2)?;
                let (object, attribute) = (args.text(0)?, args.text(1)?);
                let result = tk.verify_property(&p, &object, &attribute).map_err(tk_err)?;
                let category = format!("{attribute} {object}");
                Ok((RuntimeValue::Boolean(result), EventDetail::Verify { category, image_name: p.name, result }))
            }
            ("caption", Some(p)) => {
                args.arity(0, 0)?;
                let caption = tk.caption(&p).map_err(tk_err)?;
                Ok((RuntimeValue::Text(caption.clone()), EventDetail::Caption { image_name: p.name, caption }))
            }
            ("simple_query", Some(p)) => {
                args.arity(1, 1)?;
                let question = args.text(0)?;
                let answer = tk.simple_query(&p, &question).map_err(tk_err)?;
                let detail = EventDetail::SimpleQuery { image_name: p.name, question, answer: answer.clone() };
                Ok((RuntimeValue::Text(answer), detail))
            }
            ("compute_depth", Some(p)) => {
                args.arity(0, 0)?;
                let depth = tk.compute_depth(&p).map_err(tk_err)?;
                Ok((RuntimeValue::Number(depth), EventDetail::Depth { image_name: p.name, depth }))
            }
            ("crop", Some(p)) => {
                args.arity(4, 4)?;
                let c = [args.number(0)?, args.number(1)?, args.number(2)?, args.number(3)?];
                let bbox = BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| format!("crop: {e}"))?;
                let mut out = tk.crop(&p, bbox).map_err(tk_err)?;
                out.name = self.next_name("crop");
                Ok((RuntimeValue::Patch(out), EventDetail::Value))
            }
            ("llm_query", None) => {
                args.arity(1, 2)?;
                let question = args.text(0)?;
                let context = if args.values.len() > 1 { args.text(1)? } else { String::new() };
                let answer = tk.llm_query(&question, &context).map_err(tk_err)?;
                let detail = EventDetail::LlmQuery { question, context, answer: answer.clone() };
                Ok((RuntimeValue::Text(answer), detail))
            }
            ("sort_horizontal", None) => {
                args.arity(1, 1)?;
                let mut list = args.list(0)?;
                list.sort_by(|a, b| a.bbox.x1.total_cmp(&b.bbox.x1).then(a.bbox.y1.total_cmp(&b.bbox.y1)));
                Ok((RuntimeValue::PatchList(list), EventDetail::Sort))
            }
            ("middle", None) => {
                args.arity(1, 1)?;
                let list = args.non_empty_list(0)?;
                let mid = list[list.len() / 2].clone();
                Ok((RuntimeValue::Patch(mid.clone()), EventDetail::Middle { name: mid.name }))
            }
            ("closest", None) | ("farthest", None) => {
                args.arity(1, 2)?;
                let list = args.non_empty_list(0)?;
                let anchor = if args.values.len() > 1 { Some(args.patch(1)?) } else { None };
                let distance = |p: &Patch| -> Eval<f64> {
                    match &anchor {
                        Some(a) => {
                            let (ax, ay) = a.bbox.center();
                            let (px, py) = p.bbox.center();
                            Ok(((ax - px).powi(2) + (ay - py).powi(2)).sqrt())
                        }
                        None => tk.compute_depth(p).map_err(tk_err),
                    }
                };
                let want_min = name == "closest";
                let mut best = 0;
                let mut best_d = distance(&list[0])?;
                for (i, p) in list.iter().enumerate().skip(1) {
                    let d = distance(p)?;
                    if (want_min && d < best_d) || (!want_min && d > best_d) {
                        best = i;
                        best_d = d;
                    }
                }
                let chosen = list[best].clone();
                let anchor = anchor.map_or_else(|| "the camera".to_string(), |a| a.name);
                let detail = if want_min {
                    EventDetail::Closest { name: chosen.name.clone(), anchor }
                } else {
                    EventDetail::Farthest { name: chosen.name.clone(), anchor }
                };
                Ok((RuntimeValue::Patch(chosen), detail))
            }
            ("count", None) => {
                args.arity(1, 1)?;
                Ok((RuntimeValue::Number(args.list(0)?.len() as f64), EventDetail::Value))
            }
            _ => Err(format!("skill `{name}` has no implementation")),
        }
    }
}

struct Args<'a> {
    skill: &'a str,
    values: Vec<RuntimeValue>,
}

impl Args<'_> {
    fn arity(&self, min: usize, max: usize) -> Eval<()> {
        let n = self.values.len();
        if n < min || n > max {
            let want = if min == max { min.to_string() } else { format!("{min} to {max}") };
            return Err(format!("`{}` takes {want} argument(s), got {n}", self.skill));
        }
        Ok(())
    }

    fn mismatch(&self, i: usize, want: &str) -> String {
        format!("argument {} of `{}` must be {want}, got {}", i + 1, self.skill, self.values[i].type_name())
    }

    fn text(&self, i: usize) -> Eval<String> {
        match &self.values[i] {
            RuntimeValue::Text(s) => Ok(s.clone()),
            _ => Err(self.mismatch(i, "text")),
        }
    }

    fn number(&self, i: usize) -> Eval<f64> {
        match &self.values[i] {
            RuntimeValue::Number(n) => Ok(*n),
            _ => Err(self.mismatch(i, "a number")),
        }
    }

    fn patch(&self, i: usize) -> Eval<Patch> {
        match &self.values[i] {
            RuntimeValue::Patch(p) => Ok(p.clone()),
            _ => Err(self.mismatch(i, "a patch")),
        }
    }

    fn list(&self, i: usize) -> Eval<Vec<Patch>> {
        match &self.values[i] {
            RuntimeValue::PatchList(l) => Ok(l.clone()),
            _ => Err(self.mismatch(i, "a patch list")),
        }
    }

    fn non_empty_list(&self, i: usize) -> Eval<Vec<Patch>> {
        let l = self.list(i)?;
        if l.is_empty() {
            return Err(format!("`{}` needs a non-empty patch list", self.skill));
        }
        Ok(l)
    }
}

/// Runs `script` in a fresh session rooted at `root`.
pub fn interpret(script: &ActionScript, toolkit: &dyn PerceptionToolkit, root: Patch) -> ExecutionTrace {
    Session::new(root).execute(script, toolkit)
}
