use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::controller::{EmbeddingProvider, HashEmbedding, HttpEmbedding, Hyperparams, Optimizer};
use crate::error::{Error, Result};
use crate::llm::{ChatConfig, HttpChatBackend, LlmBackend, ScriptedBackend};
use crate::orchestrator::{BackendProvider, Backends, Components, LoopConfig, SyntheticBackends};
use crate::perception::{HttpToolkitConfig, HttpToolkitProvider, SceneDirProvider, ToolkitProvider};
use crate::prompt::PromptTemplates;
use crate::textualizer::FeedbackTemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    /// Built-in planner, coder and summarizer for the synthetic task family.
    Synthetic,
    /// Canned replies per role, read from a JSON file.
    Scripted,
    /// OpenAI-style chat-completions endpoints.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    Hash,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolkitMode {
    Mock,
    Http,
}

macro_rules! keyword_enum {
    ($t:ty, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::Config(format!(
                        "unknown mode `{other}`, expected one of: {}", [$($name),+].join(", ")
                    ))),
                }
            }
        }
        impl $t {
            pub fn as_str(self) -> &'static str {
                $(if self == $v { return $name; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(LlmMode, "synthetic" => LlmMode::Synthetic, "scripted" => LlmMode::Scripted, "http" => LlmMode::Http);
keyword_enum!(EmbeddingMode, "hash" => EmbeddingMode::Hash, "http" => EmbeddingMode::Http);
keyword_enum!(ToolkitMode, "mock" => ToolkitMode::Mock, "http" => ToolkitMode::Http);

#[derive(Debug, Clone, PartialEq)]
pub struct LlmSection {
    pub mode: LlmMode,
    pub endpoint: String,
    pub model: String,
    /// Falls back to `endpoint` / `model` when empty.
    pub summarizer_endpoint: String,
    pub summarizer_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub script: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSection {
    pub mode: EmbeddingMode,
    pub endpoint: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolkitSection {
    pub mode: ToolkitMode,
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_connections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathsSection {
    pub templates: Option<PathBuf>,
    pub scenes: Option<PathBuf>,
}

/// Everything a CLI run needs, loaded from a flat `section.key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub loop_cfg: LoopConfig,
    pub hyper: Hyperparams,
    pub llm: LlmSection,
    pub embedding: EmbeddingSection,
    pub toolkit: ToolkitSection,
    pub paths: PathsSection,
    pub eval_workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            loop_cfg: LoopConfig::default(),
            hyper: Hyperparams::default(),
            llm: LlmSection {
                mode: LlmMode::Synthetic,
                endpoint: String::new(),
                model: String::new(),
                summarizer_endpoint: String::new(),
                summarizer_model: String::new(),
                api_key_env: String::new(),
                timeout_secs: 60.0,
                max_retries: 3,
                temperature: 0.7,
                script: None,
                seed: 0,
            },
            embedding: EmbeddingSection { mode: EmbeddingMode::Hash, endpoint: String::new(), model: String::new() },
            toolkit: ToolkitSection { mode: ToolkitMode::Mock, endpoint: String::new(), timeout_secs: 30.0, max_connections: 4 },
            paths: PathsSection { templates: None, scenes: None },
            eval_workers: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Config(format!("{key}: cannot parse `{raw}`: {e}")))
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses config text. Unknown keys are errors; missing keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), n + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.templates, &mut cfg.paths.scenes, &mut cfg.llm.script].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let (l, h) = (&mut self.loop_cfg, &mut self.hyper);
        match key {
            "loop.n_samples" => l.n_samples = parse_value(key, v)?,
            "loop.max_iterations" => l.max_iterations = parse_value(key, v)?,
            "loop.max_rejections_per_step" => l.max_rejections_per_step = parse_value(key, v)?,
            "loop.code_retry_limit" => l.code_retry_limit = parse_value(key, v)?,
            "loop.planner_retry_limit" => l.planner_retry_limit = parse_value(key, v)?,
            "train.alpha" => h.alpha = parse_value(key, v)?,
            "train.r1" => h.r1 = parse_value(key, v)?,
            "train.gamma" => h.gamma = parse_value(key, v)?,
            "train.lr" => h.lr = parse_value(key, v)?,
            "train.batch" => h.batch = parse_value(key, v)?,
            "train.learning_start" => h.learning_start = parse_value(key, v)?,
            "train.eps0" => h.eps0 = parse_value(key, v)?,
            "train.eps_decay" => h.eps_decay = parse_value(key, v)?,
            "train.eps_interval" => h.eps_interval = parse_value(key, v)?,
            "train.buffer_capacity" => h.buffer_capacity = parse_value(key, v)?,
            "train.optimizer" => {
                h.optimizer = match v {
                    "sgd" => Optimizer::Sgd,
                    "rmsprop" => match h.optimizer {
                        Optimizer::RmsProp { .. } => h.optimizer,
                        Optimizer::Sgd => Optimizer::default(),
                    },
                    other => return Err(Error::Config(format!("unknown optimizer `{other}`, expected sgd or rmsprop"))),
                }
            }
            "train.rms_decay" | "train.rms_eps" => match &mut h.optimizer {
                Optimizer::RmsProp { decay, eps } => {
                    let slot = if key == "train.rms_decay" { decay } else { eps };
                    *slot = parse_value(key, v)?;
                }
                Optimizer::Sgd => return Err(Error::Config(format!("{key} needs train.optimizer = rmsprop first"))),
            },
            "llm.mode" => self.llm.mode = v.parse()?,
            "llm.endpoint" => self.llm.endpoint = v.to_string(),
            "llm.model" => self.llm.model = v.to_string(),
            "llm.summarizer_endpoint" => self.llm.summarizer_endpoint = v.to_string(),
            "llm.summarizer_model" => self.llm.summarizer_model = v.to_string(),
            "llm.api_key_env" => self.llm.api_key_env = v.to_string(),
            "llm.timeout_secs" => self.llm.timeout_secs = parse_value(key, v)?,
            "llm.max_retries" => self.llm.max_retries = parse_value(key, v)?,
            "llm.temperature" => self.llm.temperature = parse_value(key, v)?,
            "llm.script" => self.llm.script = opt_path(v),
            "llm.seed" => self.llm.seed = parse_value(key, v)?,
            "embedding.mode" => self.embedding.mode = v.parse()?,
            "embedding.endpoint" => self.embedding.endpoint = v.to_string(),
            "embedding.model" => self.embedding.model = v.to_string(),
            "toolkit.mode" => self.toolkit.mode = v.parse()?,
            "toolkit.endpoint" => self.toolkit.endpoint = v.to_string(),
            "toolkit.timeout_secs" => self.toolkit.timeout_secs = parse_value(key, v)?,
            "toolkit.max_connections" => self.toolkit.max_connections = parse_value(key, v)?,
            "paths.templates" => self.paths.templates = opt_path(v),
            "paths.scenes" => self.paths.scenes = opt_path(v),
            "eval.workers" => self.eval_workers = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let (l, h) = (&self.loop_cfg, &self.hyper);
        let mut pairs: Vec<(&str, String)> = vec![
            ("loop.n_samples", l.n_samples.to_string()),
            ("loop.max_iterations", l.max_iterations.to_string()),
            ("loop.max_rejections_per_step", l.max_rejections_per_step.to_string()),
            ("loop.code_retry_limit", l.code_retry_limit.to_string()),
            ("loop.planner_retry_limit", l.planner_retry_limit.to_string()),
            ("train.alpha", h.alpha.to_string()),
            ("train.r1", h.r1.to_string()),
            ("train.gamma", h.gamma.to_string()),
            ("train.lr", h.lr.to_string()),
            ("train.batch", h.batch.to_string()),
            ("train.learning_start", h.learning_start.to_string()),
            ("train.eps0", h.eps0.to_string()),
            ("train.eps_decay", h.eps_decay.to_string()),
            ("train.eps_interval", h.eps_interval.to_string()),
            ("train.buffer_capacity", h.buffer_capacity.to_string()),
        ];
        match h.optimizer {
            Optimizer::Sgd => pairs.push(("train.optimizer", "sgd".into())),
            Optimizer::RmsProp { decay, eps } => pairs.extend([
                ("train.optimizer", "rmsprop".into()),
                ("train.rms_decay", decay.to_string()),
                ("train.rms_eps", eps.to_string()),
            ]),
        }
        pairs.extend([
            ("llm.mode", self.llm.mode.as_str().to_string()),
            ("llm.endpoint", self.llm.endpoint.clone()),
            ("llm.model", self.llm.model.clone()),
            ("llm.summarizer_endpoint", self.llm.summarizer_endpoint.clone()),
            ("llm.summarizer_model", self.llm.summarizer_model.clone()),
            ("llm.api_key_env", self.llm.api_key_env.clone()),
            ("llm.timeout_secs", self.llm.timeout_secs.to_string()),
            ("llm.max_retries", self.llm.max_retries.to_string()),
            ("llm.temperature", self.llm.temperature.to_string()),
            ("llm.script", path_str(&self.llm.script)),
            ("llm.seed", self.llm.seed.to_string()),
            ("embedding.mode", self.embedding.mode.as_str().to_string()),
            ("embedding.endpoint", self.embedding.endpoint.clone()),
            ("embedding.model", self.embedding.model.clone()),
            ("toolkit.mode", self.toolkit.mode.as_str().to_string()),
            ("toolkit.endpoint", self.toolkit.endpoint.clone()),
            ("toolkit.timeout_secs", self.toolkit.timeout_secs.to_string()),
            ("toolkit.max_connections", self.toolkit.max_connections.to_string()),
            ("paths.templates", path_str(&self.paths.templates)),
            ("paths.scenes", path_str(&self.paths.scenes)),
            ("eval.workers", self.eval_workers.to_string()),
        ]);
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.loop_cfg.validate()?;
        let h = &self.hyper;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(h.alpha.is_finite() && h.alpha > 0.0) {
            return bad("train.alpha must be positive");
        }
        if !h.r1.is_finite() {
            return bad("train.r1 must be finite");
        }
        if !(0.0..=1.0).contains(&h.gamma) {
            return bad("train.gamma must lie in [0, 1]");
        }
        if !(h.lr.is_finite() && h.lr > 0.0) {
            return bad("train.lr must be positive");
        }
        if h.batch == 0 || h.buffer_capacity < h.batch {
            return bad("train.batch must be positive and no larger than train.buffer_capacity");
        }
        if !(h.eps0 > 0.0 && h.eps_decay > 0.0 && h.eps_interval > 0.0) {
            return bad("train.eps0, train.eps_decay and train.eps_interval must be positive");
        }
        if let Optimizer::RmsProp { decay, eps } = h.optimizer {
            if !((0.0..1.0).contains(&decay) && eps > 0.0) {
                return bad("train.rms_decay must lie in [0, 1) and train.rms_eps must be positive");
            }
        }
        if self.eval_workers == 0 {
            return bad("eval.workers must be at least 1");
        }
        match self.llm.mode {
            LlmMode::Http if self.llm.endpoint.is_empty() || self.llm.model.is_empty() => {
                return bad("llm.mode = http requires llm.endpoint and llm.model")
            }
            LlmMode::Scripted if self.llm.script.is_none() => return bad("llm.mode = scripted requires llm.script"),
            _ => {}
        }
        if !(self.llm.timeout_secs > 0.0 && self.toolkit.timeout_secs > 0.0) {
            return bad("timeouts must be positive");
        }
        if self.embedding.mode == EmbeddingMode::Http && (self.embedding.endpoint.is_empty() || self.embedding.model.is_empty()) {
            return bad("embedding.mode = http requires embedding.endpoint and embedding.model");
        }
        match self.toolkit.mode {
            ToolkitMode::Mock if self.paths.scenes.is_none() => bad("toolkit.mode = mock requires paths.scenes"),
            ToolkitMode::Http if self.toolkit.endpoint.is_empty() => bad("toolkit.mode = http requires toolkit.endpoint"),
            ToolkitMode::Http if self.toolkit.max_connections == 0 => bad("toolkit.max_connections must be positive"),
            _ => Ok(()),
        }
    }

    fn api_key(&self) -> Option<String> {
        (!self.llm.api_key_env.is_empty()).then(|| std::env::var(&self.llm.api_key_env).ok()).flatten()
    }

    pub fn backend_provider(&self) -> Result<Arc<dyn BackendProvider>> {
        Ok(match self.llm.mode {
            LlmMode::Synthetic => Arc::new(SyntheticBackends::new(self.llm.seed)),
            LlmMode::Scripted => {
                let path = self.llm.script.as_ref().expect("validated");
                Arc::new(ScriptedProvider::load(path)?)
            }
            LlmMode::Http => {
                let chat = |endpoint: &str, model: &str| -> Result<Arc<dyn LlmBackend>> {
                    let mut c = ChatConfig::new(endpoint, model);
                    c.api_key = self.api_key();
                    c.timeout_secs = self.llm.timeout_secs;
                    c.max_retries = self.llm.max_retries;
                    c.temperature = self.llm.temperature;
                    Ok(Arc::new(HttpChatBackend::new(c)?))
                };
                let main = chat(&self.llm.endpoint, &self.llm.model)?;
                let s_end = if self.llm.summarizer_endpoint.is_empty() { &self.llm.endpoint } else { &self.llm.summarizer_endpoint };
                let s_model = if self.llm.summarizer_model.is_empty() { &self.llm.model } else { &self.llm.summarizer_model };
                let summarizer = if (s_end, s_model) == (&self.llm.endpoint, &self.llm.model) { main.clone() } else { chat(s_end, s_model)? };
                Arc::new(Backends { planner: main.clone(), coder: main, summarizer })
            }
        })
    }

    pub fn toolkit_provider(&self) -> Result<Arc<dyn ToolkitProvider>> {
        Ok(match self.toolkit.mode {
            ToolkitMode::Mock => Arc::new(SceneDirProvider { dir: self.paths.scenes.clone().expect("validated") }),
            ToolkitMode::Http => {
                let mut c = HttpToolkitConfig::new(&self.toolkit.endpoint);
                c.timeout_secs = self.toolkit.timeout_secs;
                c.max_connections = self.toolkit.max_connections;
                Arc::new(HttpToolkitProvider::new(c)?)
            }
        })
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self.embedding.mode {
            EmbeddingMode::Hash => Arc::new(HashEmbedding),
            EmbeddingMode::Http => Arc::new(HttpEmbedding::new(
                &self.embedding.endpoint,
                &self.embedding.model,
                self.api_key(),
                self.llm.timeout_secs,
                self.llm.max_retries,
            )?),
        })
    }

    /// Templates, backends and toolkit wired from this config.
    pub fn components(&self) -> Result<Components> {
        let mut comps = Components::new(self.backend_provider()?, self.toolkit_provider()?);
        if let Some(dir) = &self.paths.templates {
            comps.templates = PromptTemplates::load(dir)?;
            let feedback = dir.join("feedback.txt");
            if feedback.exists() {
                comps.feedback = FeedbackTemplateSet::parse(&std::fs::read_to_string(feedback)?)?;
            }
        }
        Ok(comps)
    }
}

/// Canned replies for each role; every episode replays them from the start.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScriptedProvider {
    pub planner: Vec<String>,
    pub coder: Vec<String>,
    pub summarizer: Vec<String>,
}

impl ScriptedProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read llm script {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("llm script {}: {e}", path.display())))
    }
}

impl BackendProvider for ScriptedProvider {
    fn for_episode(&self, _key: &str) -> Result<Backends> {
        Ok(Backends {
            planner: Arc::new(ScriptedBackend::new("scripted-planner", self.planner.clone())),
            coder: Arc::new(ScriptedBackend::new("scripted-coder", self.coder.clone())),
            summarizer: Arc::new(ScriptedBackend::new("scripted-summarizer", self.summarizer.clone())),
        })
    }
}
