//! Episode-level data shared by every stage of the loop: the query, candidate
//! instructions, the per-step state memory and the episode-constant meta info.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Vqa,
    Grounding,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Vqa => "vqa",
            TaskKind::Grounding => "grounding",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vqa" => Ok(TaskKind::Vqa),
            "grounding" => Ok(TaskKind::Grounding),
            other => Err(Error::Invalid(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    text: String,
    image_ref: String,
    task_kind: TaskKind,
}

impl Query {
    pub fn new(text: impl Into<String>, image_ref: impl Into<String>, task_kind: TaskKind) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Invalid("query text must be non-empty".into()));
        }
        Ok(Self { text, image_ref: image_ref.into(), task_kind })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn image_ref(&self) -> &str {
        &self.image_ref
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }
}

/// Axis-aligned box in pixel coordinates, `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite box [{x1}, {y1}, {x2}, {y2}]")));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::Invalid(format!("inverted box [{x1}, {y1}, {x2}, {y2}]")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Center containment, boundaries inclusive.
    pub fn contains_point(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x1 <= x2 && y1 <= y2).then_some(BoundingBox { x1, y1, x2, y2 })
    }

    /// Comma-separated form used on the command line: `x1,y1,x2,y2`.
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.x1, self.y1, self.x2, self.y2)
    }

    pub fn parse_csv(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("bad box `{s}`: {e}")))?;
        match parts.as_slice() {
            [x1, y1, x2, y2] => Self::new(*x1, *y1, *x2, *y2),
            _ => Err(Error::Invalid(format!("box `{s}` needs four coordinates"))),
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from([x1, y1, x2, y2]: [f64; 4]) -> Result<Self> {
        Self::new(x1, y1, x2, y2)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Answer {
    Text { text: String },
    Box { bbox: BoundingBox },
    Unanswered,
}

impl Answer {
    pub fn is_answered(&self) -> bool {
        !matches!(self, Answer::Unanswered)
    }

    /// Printed form: the text, or the box as `x1,y1,x2,y2`.
    pub fn display(&self) -> Option<String> {
        match self {
            Answer::Text { text } => Some(text.clone()),
            Answer::Box { bbox } => Some(bbox.to_csv()),
            Answer::Unanswered => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    text: String,
    confidence: f64,
}

impl InstructionSample {
    pub fn new(text: impl Into<String>, confidence: f64) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Invalid("instruction text must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { text, confidence })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// The planner's candidates for one step, in planner order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSet {
    samples: Vec<InstructionSample>,
    step: usize,
}

impl InstructionSet {
    pub fn new(samples: Vec<InstructionSample>, step: usize, n: usize) -> Result<Self> {
        if step == 0 {
            return Err(Error::Invalid("instruction step starts at 1".into()));
        }
        if samples.len() != n {
            return Err(Error::Invalid(format!("expected {n} instruction samples, got {}", samples.len())));
        }
        Ok(Self { samples, step })
    }

    pub fn samples(&self) -> &[InstructionSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.confidence).collect()
    }

    /// Index of the most confident sample, lowest index on ties.
    pub fn most_confident(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.samples.iter().enumerate() {
            if s.confidence > self.samples[best].confidence {
                best = i;
            }
        }
        best
    }

    /// Numbered lines in the planner's accepted syntax.
    pub fn to_lines(&self) -> String {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {} (probability: {})", i + 1, s.text, s.confidence))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub step: usize,
    pub text: String,
}

impl FeedbackEntry {
    pub fn new(step: usize, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::Invalid("feedback text must be non-empty".into()));
        }
        Ok(Self { step, text })
    }
}

/// Per-episode history `s^{0:t-1}`. Every completed step contributes one
/// entry to each of the four histories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateMemory {
    feedback: Vec<FeedbackEntry>,
    instructions: Vec<InstructionSample>,
    scripts: Vec<String>,
    /// Variable assignments made by each step, as `(name, textualized value)`.
    variables: Vec<Vec<(String, String)>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderedMemory {
    pub instruction_history: String,
    pub code_history: String,
    pub feedback_history: String,
    pub variables: String,
}

impl StateMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of completed steps.
    pub fn len(&self) -> usize {
        self.feedback.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feedback.is_empty()
    }

    /// The step the next append must carry.
    pub fn current_step(&self) -> usize {
        self.len() + 1
    }

    pub fn feedback(&self) -> &[FeedbackEntry] {
        &self.feedback
    }

    pub fn instructions(&self) -> &[InstructionSample] {
        &self.instructions
    }

    pub fn scripts(&self) -> &[String] {
        &self.scripts
    }

    pub fn step_variables(&self) -> &[Vec<(String, String)>] {
        &self.variables
    }

    pub fn append(
        &mut self,
        instruction: InstructionSample,
        script: impl Into<String>,
        feedback: FeedbackEntry,
        assignments: Vec<(String, String)>,
    ) -> Result<()> {
        let expected = self.current_step();
        if feedback.step != expected {
            return Err(Error::StateCorruption(format!(
                "feedback for step {} appended at step {expected}",
                feedback.step
            )));
        }
        let lens = [self.instructions.len(), self.scripts.len(), self.variables.len()];
        if lens.iter().any(|&l| l != self.feedback.len()) {
            return Err(Error::StateCorruption("histories out of lockstep".into()));
        }
        self.feedback.push(feedback);
        self.instructions.push(instruction);
        self.scripts.push(script.into());
        self.variables.push(assignments);
        Ok(())
    }

    /// Variables in first-assignment order, each with its latest value.
    pub fn variables(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for (name, value) in self.variables.iter().flatten() {
            match out.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = value.clone(),
                None => out.push((name.clone(), value.clone())),
            }
        }
        out
    }

    pub fn variable(&self, name: &str) -> Option<String> {
        self.variables
            .iter()
            .flatten()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
    }

    pub fn render(&self) -> RenderedMemory {
        let instruction_history = self
            .instructions
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{}. {}", i + 1, d.text()))
            .collect::<Vec<_>>()
            .join("\n");
        let code_history = self
            .scripts
            .iter()
            .map(|s| s.trim_end())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        let feedback_history = self.feedback.iter().map(|f| f.text.as_str()).collect::<Vec<_>>().join("\n");
        let variables = self
            .variables()
            .iter()
            .map(|(n, v)| format!("{n}: {v}"))
            .collect::<Vec<_>>()
            .join("\n");
        RenderedMemory { instruction_history, code_history, feedback_history, variables }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDescriptor {
    pub name: String,
    pub capability: String,
    pub usage: String,
}

/// Episode-constant meta information: the skill subset and the task description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaInfo {
    skills: Vec<SkillDescriptor>,
    task_description: String,
}

impl MetaInfo {
    pub fn new(skills: Vec<SkillDescriptor>, task_description: impl Into<String>) -> Result<Self> {
        for (i, s) in skills.iter().enumerate() {
            if skills[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Invalid(format!("duplicate skill `{}`", s.name)));
            }
        }
        Ok(Self { skills, task_description: task_description.into() })
    }

    /// The full skill registry with the default description for `task`.
    pub fn for_task(task: TaskKind) -> Self {
        let skills = crate::reasoner::skills::SKILLS
            .iter()
            .map(|s| SkillDescriptor {
                name: s.name.to_string(),
                capability: s.capability.to_string(),
                usage: s.usage.to_string(),
            })
            .collect();
        Self { skills, task_description: task_description(task).to_string() }
    }

    pub fn skills(&self) -> &[SkillDescriptor] {
        &self.skills
    }

    pub fn task_description(&self) -> &str {
        &self.task_description
    }

    pub fn render(&self) -> String {
        let mut out = format!("Task: {}\n\nAvailable skills:\n", self.task_description);
        for s in &self.skills {
            out.push_str(&format!("- {}: {} Example: {}\n", s.name, s.capability, s.usage));
        }
        out.truncate(out.trim_end().len());
        out
    }

    /// Task description and skill names only, without usage examples.
    pub fn summary(&self) -> String {
        let names: Vec<&str> = self.skills.iter().map(|s| s.name.as_str()).collect();
        format!("Task: {}\nSkills: {}", self.task_description, names.join(", "))
    }
}

pub fn task_description(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Vqa => "Answer the question about the image with a short phrase.",
        TaskKind::Grounding => "Locate the object described by the phrase and return its bounding box.",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(text: &str) -> InstructionSample {
        InstructionSample::new(text, 0.5).unwrap()
    }

    fn append_step(mem: &mut StateMemory, text: &str) {
        let step = mem.current_step();
        mem.append(sample(text), format!("x{step} = 1"), FeedbackEntry::new(step, format!("f{step}")).unwrap(), vec![])
            .unwrap();
    }

    #[test]
    fn first_append_fills_every_history() {
        let mut mem = StateMemory::new();
        assert!(mem.is_empty());
        append_step(&mut mem, "find girls");
        assert_eq!(mem.len(), 1);
        assert_eq!(mem.instructions().len(), 1);
        assert_eq!(mem.scripts().len(), 1);
        assert_eq!(mem.step_variables().len(), 1);
    }

    #[test]
    fn third_append_keeps_prior_entries() {
        let mut mem = StateMemory::new();
        append_step(&mut mem, "a");
        append_step(&mut mem, "b");
        let before = mem.clone();
        append_step(&mut mem, "c");
        assert_eq!(mem.len(), 3);
        assert_eq!(&mem.feedback()[..2], before.feedback());
        assert_eq!(&mem.instructions()[..2], before.instructions());
    }

    #[test]
    fn skipped_step_is_state_corruption() {
        let mut mem = StateMemory::new();
        append_step(&mut mem, "a");
        append_step(&mut mem, "b");
        let err = mem
            .append(sample("c"), "", FeedbackEntry::new(5, "f").unwrap(), vec![])
            .unwrap_err();
        assert!(matches!(err, Error::StateCorruption(_)));
        assert_eq!(mem.len(), 2);
    }

    #[test]
    fn empty_memory_renders_empty_blocks() {
        assert_eq!(StateMemory::new().render(), RenderedMemory::default());
    }

    #[test]
    fn render_golden() {
        let mut mem = StateMemory::new();
        mem.append(
            sample("find girls"),
            "boxes = image_patch.find(\"girl\")",
            FeedbackEntry::new(1, "Detection result: 2 girl have been detected in image_patch.").unwrap(),
            vec![("boxes".into(), "2 girl have been detected in image_patch".into())],
        )
        .unwrap();
        mem.append(
            sample("count the girls"),
            "n = count(boxes)\nfinal_answer = n",
            FeedbackEntry::new(2, "n: 2\nfinal_answer: 2").unwrap(),
            vec![("n".into(), "2".into()), ("final_answer".into(), "2".into())],
        )
        .unwrap();
        let r = mem.render();
        assert_eq!(r.instruction_history, "1. find girls\n2. count the girls");
        assert_eq!(r.code_history, "boxes = image_patch.find(\"girl\")\nn = count(boxes)\nfinal_answer = n");
        assert_eq!(
            r.feedback_history,
            "Detection result: 2 girl have been detected in image_patch.\nn: 2\nfinal_answer: 2"
        );
        assert_eq!(r.variables, "boxes: 2 girl have been detected in image_patch\nn: 2\nfinal_answer: 2");
    }

    #[test]
    fn reassignment_keeps_first_position() {
        let mut mem = StateMemory::new();
        mem.append(sample("a"), "", FeedbackEntry::new(1, "f").unwrap(), vec![("a".into(), "1".into()), ("b".into(), "2".into())])
            .unwrap();
        mem.append(sample("b"), "", FeedbackEntry::new(2, "f").unwrap(), vec![("a".into(), "3".into())]).unwrap();
        assert_eq!(mem.render().variables, "a: 3\nb: 2");
        assert_eq!(mem.variable("a").as_deref(), Some("3"));
    }

    #[test]
    fn box_rejects_inverted_and_non_finite() {
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert_eq!(BoundingBox::parse_csv("1,2,3,4").unwrap().to_csv(), "1,2,3,4");
    }

    #[test]
    fn confidence_bounds() {
        assert!(InstructionSample::new("x", 1.01).is_err());
        assert!(InstructionSample::new(" ", 0.5).is_err());
    }

    #[test]
    fn meta_rejects_duplicate_skills() {
        let s = SkillDescriptor { name: "find".into(), capability: "c".into(), usage: "u".into() };
        assert!(MetaInfo::new(vec![s.clone(), s], "t").is_err());
    }
}
