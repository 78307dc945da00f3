//! A small synthetic task family with deterministic planner, coder and
//! summarizer backends, used to train and benchmark the controller offline.
//!
//! Every planner call proposes the same five instruction templates in a
//! fixed order; exactly one of them answers the query. Confidences are noisy
//! so that always taking the most confident instruction is right only about
//! 40% of the time.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendProvider, Backends, EpisodeResult};
use crate::error::{Error, Result};
use crate::harness::{write_dataset, DatasetRow, Gold};
use crate::llm::LlmBackend;
use crate::perception::{MockToolkit, PerceptionToolkit, Scene, SceneObject, ToolkitProvider};
use crate::state::{BoundingBox, TaskKind};

const NOUNS: [&str; 12] = ["dog", "cat", "car", "girl", "boy", "chair", "cup", "bird", "horse", "tree", "lamp", "bike"];
const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "black", "white", "brown", "gray"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const GRID: (usize, usize) = (4, 2);
/// Chance that the planner gives the correct instruction the top confidence.
const BOOST: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InstructionKind {
    Count,
    Color,
    Exists,
    Caption,
    Depth,
}

impl InstructionKind {
    pub const ALL: [InstructionKind; 5] =
        [InstructionKind::Count, InstructionKind::Color, InstructionKind::Exists, InstructionKind::Caption, InstructionKind::Depth];

    /// Position of this kind in every candidate list.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn instruction(self, noun: &str) -> String {
        match self {
            InstructionKind::Count => format!("count the {noun}"),
            InstructionKind::Color => format!("ask what color the {noun} is"),
            InstructionKind::Exists => format!("check whether there is a {noun}"),
            InstructionKind::Caption => "describe the image".to_string(),
            InstructionKind::Depth => format!("compute the depth of the {noun}"),
        }
    }

    pub fn query(self, noun: &str) -> String {
        match self {
            InstructionKind::Count => format!("How many {noun}s are in the image?"),
            InstructionKind::Color => format!("What color is the {noun}?"),
            InstructionKind::Exists => format!("Is there a {noun} in the image?"),
            InstructionKind::Caption => "What is happening in the image?".to_string(),
            InstructionKind::Depth => format!("How far away is the {noun}?"),
        }
    }

    pub fn script(self, noun: &str) -> String {
        match self {
            InstructionKind::Count => format!("{noun}s = image_patch.find(\"{noun}\")\nfinal_answer = count({noun}s)"),
            InstructionKind::Color => format!("final_answer = image_patch.simple_query(\"What color is the {noun}?\")"),
            InstructionKind::Exists => format!("final_answer = image_patch.exists(\"{noun}\")"),
            InstructionKind::Caption => "final_answer = image_patch.caption()".to_string(),
            InstructionKind::Depth => format!(
                "{noun}s = image_patch.find(\"{noun}\")\n{noun} = {noun}s[0]\nfinal_answer = {noun}.compute_depth()"
            ),
        }
    }

    fn from_instruction(text: &str) -> Option<(InstructionKind, String)> {
        let text = text.trim();
        let patterns: [(InstructionKind, &str, &str); 5] = [
            (InstructionKind::Count, "count the ", ""),
            (InstructionKind::Color, "ask what color the ", " is"),
            (InstructionKind::Exists, "check whether there is a ", ""),
            (InstructionKind::Caption, "describe the image", ""),
            (InstructionKind::Depth, "compute the depth of the ", ""),
        ];
        patterns.into_iter().find_map(|(kind, prefix, suffix)| {
            let noun = text.strip_prefix(prefix)?.strip_suffix(suffix)?;
            Some((kind, if kind == InstructionKind::Caption { "object".to_string() } else { noun.to_string() }))
        })
    }
}

/// The noun a query is about, or "object" when it names none.
fn query_noun(query: &str) -> &'static str {
    query
        .split(|c: char| !c.is_ascii_alphabetic())
        .find_map(|w| {
            let w = w.to_ascii_lowercase();
            NOUNS.iter().find(|n| w == **n || w.strip_suffix('s') == Some(**n)).copied()
        })
        .unwrap_or("object")
}

fn query_kind(query: &str) -> Option<InstructionKind> {
    InstructionKind::ALL.into_iter().find(|k| {
        let q = k.query(query_noun(query));
        q == query
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExample {
    pub row: DatasetRow,
    pub scene: Scene,
    pub kind: InstructionKind,
}

fn caption_for(objects: &[SceneObject]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in objects {
        *counts.entry(o.name.as_str()).or_default() += 1;
    }
    let parts: Vec<String> =
        counts.into_iter().map(|(n, c)| if c == 1 { format!("a {n}") } else { format!("{c} {n}s") }).collect();
    match parts.split_last() {
        Some((last, rest)) if !rest.is_empty() => format!("{} and {last} on a plain background", rest.join(", ")),
        _ => format!("{} on a plain background", parts.join("")),
    }
}

fn generate_one(i: usize, rng: &mut ChaCha8Rng) -> SyntheticExample {
    let kind = InstructionKind::ALL[i % InstructionKind::ALL.len()];
    let n_objects = rng.gen_range(2..=6);
    let mut cells: Vec<usize> = (0..GRID.0 * GRID.1).collect();
    cells.shuffle(rng);
    let (cw, ch) = (WIDTH / GRID.0 as f64, HEIGHT / GRID.1 as f64);

    let target = *NOUNS.choose(rng).expect("nouns");
    let unique = matches!(kind, InstructionKind::Color | InstructionKind::Depth);
    let present = kind != InstructionKind::Exists || rng.gen_bool(0.5);
    let mut names: Vec<&str> = Vec::with_capacity(n_objects);
    if present {
        names.push(target);
    }
    while names.len() < n_objects {
        let n = *NOUNS.choose(rng).expect("nouns");
        if n == target && (unique || !present) {
            continue;
        }
        names.push(n);
    }
    names.shuffle(rng);

    let objects: Vec<SceneObject> = names
        .iter()
        .zip(&cells)
        .map(|(name, &cell)| {
            let (cx, cy) = ((cell % GRID.0) as f64 * cw, (cell / GRID.0) as f64 * ch);
            let (mx, my) = (rng.gen_range(5..40) as f64, rng.gen_range(5..60) as f64);
            let (w, h) = (rng.gen_range(40..(cw as i64 - 45)) as f64, rng.gen_range(60..(ch as i64 - 65)) as f64);
            let mut attributes = BTreeMap::new();
            attributes.insert("color".to_string(), COLORS.choose(rng).expect("colors").to_string());
            SceneObject {
                name: name.to_string(),
                bbox: BoundingBox { x1: cx + mx, y1: cy + my, x2: cx + mx + w, y2: cy + my + h },
                attributes,
                depth: rng.gen_range(1..10) as f64 + 0.5,
            }
        })
        .collect();

    let mut qa = BTreeMap::new();
    for o in &objects {
        if objects.iter().filter(|p| p.name == o.name).count() == 1 {
            qa.insert(format!("What color is the {}?", o.name), o.attributes["color"].clone());
        }
    }
    let caption = caption_for(&objects);
    let noun = if kind == InstructionKind::Caption { "object" } else { target };
    let find = |n: &str| objects.iter().find(|o| o.name == n);
    let gold = match kind {
        InstructionKind::Count => objects.iter().filter(|o| o.name == target).count().to_string(),
        InstructionKind::Color => find(target).expect("unique target").attributes["color"].clone(),
        InstructionKind::Exists => if present { "yes" } else { "no" }.to_string(),
        InstructionKind::Caption => caption.clone(),
        InstructionKind::Depth => format!("{}", find(target).expect("unique target").depth),
    };
    let id = format!("syn-{i:05}");
    let scene = Scene { format_version: 1, width: WIDTH, height: HEIGHT, objects, caption, qa };
    let row = DatasetRow { id: id.clone(), query: kind.query(noun), image: format!("{id}.json"), task: TaskKind::Vqa, gold: Gold::Text(gold) };
    SyntheticExample { row, scene, kind }
}

/// `n` examples cycling through the five query kinds.
pub fn generate_synthetic(n: usize, seed: u64) -> Vec<SyntheticExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| generate_one(i, &mut rng)).collect()
}

/// Writes `dataset.jsonl` and one scene file per example under `dir`.
pub fn write_synthetic(dir: impl AsRef<Path>, examples: &[SyntheticExample]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("scenes"))?;
    for ex in examples {
        std::fs::write(dir.join("scenes").join(&ex.row.image), serde_json::to_string_pretty(&ex.scene)?)?;
    }
    let rows: Vec<DatasetRow> = examples.iter().map(|e| e.row.clone()).collect();
    write_dataset(dir.join("dataset.jsonl"), &rows)
}

/// Fraction of episodes whose first accepted instruction was the one that
/// answers the query.
pub fn selection_accuracy(examples: &[SyntheticExample], results: &[EpisodeResult]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples.iter().zip(results).filter(|(e, r)| r.first_accepted() == Some(e.kind.index())).count();
    hits as f64 / examples.len() as f64
}

/// In-memory scenes keyed by image reference.
#[derive(Debug, Clone, Default)]
pub struct SyntheticScenes {
    scenes: BTreeMap<String, Arc<Scene>>,
}

impl SyntheticScenes {
    pub fn new(examples: &[SyntheticExample]) -> Self {
        Self { scenes: examples.iter().map(|e| (e.row.image.clone(), Arc::new(e.scene.clone()))).collect() }
    }

    pub fn insert(&mut self, image: impl Into<String>, scene: Scene) {
        self.scenes.insert(image.into(), Arc::new(scene));
    }
}

impl ToolkitProvider for SyntheticScenes {
    fn toolkit_for(&self, image_ref: &str) -> Result<Arc<dyn PerceptionToolkit>> {
        let scene = self.scenes.get(image_ref).ok_or_else(|| Error::Config(format!("unknown scene `{image_ref}`")))?;
        Ok(Arc::new(MockToolkit::new(image_ref, (**scene).clone())))
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.rfind(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |i| &rest[..i]))
}

fn mix(seed: u64, key: &str) -> u64 {
    key.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

struct SyntheticPlanner {
    seed: u64,
    calls: AtomicU64,
}

impl LlmBackend for SyntheticPlanner {
    fn complete(&self, prompt: &str) -> Result<String> {
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(call.wrapping_mul(0x2545_f491_4f6c_dd1d)));
        let query = between(prompt, "The question is '", "'\n").unwrap_or("");
        let noun = query_noun(query);
        let mut conf: Vec<f64> = (0..5).map(|_| (rng.gen_range(0.15..0.95f64) * 100.0).round() / 100.0).collect();
        if let Some(kind) = query_kind(query) {
            if rng.gen_bool(BOOST) {
                let top = (0..5).max_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(b.cmp(&a))).expect("five");
                conf.swap(top, kind.index());
            }
        }
        Ok(InstructionKind::ALL
            .iter()
            .zip(conf)
            .enumerate()
            .map(|(i, (k, p))| format!("{}. {} (probability: {p})", i + 1, k.instruction(noun)))
            .collect::<Vec<_>>()
            .join("\n"))
    }

    fn identity(&self) -> &str {
        "synthetic-planner"
    }
}

struct SyntheticCoder;

impl LlmBackend for SyntheticCoder {
    fn complete(&self, prompt: &str) -> Result<String> {
        let instruction = between(prompt, "Current Instruction: ", "\n").unwrap_or("");
        Ok(match InstructionKind::from_instruction(instruction) {
            Some((kind, noun)) => kind.script(&noun),
            None => String::new(),
        })
    }

    fn identity(&self) -> &str {
        "synthetic-coder"
    }
}

struct SyntheticSummarizer;

impl LlmBackend for SyntheticSummarizer {
    fn complete(&self, prompt: &str) -> Result<String> {
        let vars = between(prompt, "Each variable details:", "Execution Feedback").unwrap_or("");
        let value = vars.lines().rev().find_map(|l| l.trim().strip_prefix("final_answer: "));
        Ok(match value.map(str::trim) {
            Some("True") => "yes".into(),
            Some("False") => "no".into(),
            Some(v) if !v.is_empty() => v.to_string(),
            _ => "continue".into(),
        })
    }

    fn identity(&self) -> &str {
        "synthetic-summarizer"
    }
}

/// Synthetic backends; the planner's noise stream depends on the seed and
/// the episode key only.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticBackends {
    seed: u64,
}

impl SyntheticBackends {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl BackendProvider for SyntheticBackends {
    fn for_episode(&self, key: &str) -> Result<Backends> {
        Ok(Backends {
            planner: Arc::new(SyntheticPlanner { seed: mix(self.seed, key), calls: AtomicU64::new(0) }),
            coder: Arc::new(SyntheticCoder),
            summarizer: Arc::new(SyntheticSummarizer),
        })
    }
}
