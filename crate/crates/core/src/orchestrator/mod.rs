//! The plan, select, execute and textualize loop, plus controller training.

mod synthetic;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synthetic::{
    generate_synthetic, selection_accuracy, write_synthetic, InstructionKind, SyntheticBackends, SyntheticExample,
    SyntheticScenes,
};

use crate::controller::{
    decide, embed_state, select, ActionDecision, Choice, EmbeddingProvider, ExplorationSchedule, Hyperparams,
    OptimizerState, QNetwork, ReplayBuffer, RewardTrace, SparseVec, Transition,
};
use crate::error::{Error, Result};
use crate::harness::{score, DatasetRow, Gold};
use crate::llm::LlmBackend;
use crate::perception::{PerceptionToolkit, ToolkitProvider};
use crate::planner::{generate_instructions, PlannerOutput};
use crate::prompt::{PromptContext, PromptTemplates};
use crate::reasoner::{generate_and_execute, Session, FINAL_ANSWER};
use crate::state::{Answer, BoundingBox, FeedbackEntry, InstructionSet, MetaInfo, Query, StateMemory, TaskKind};
use crate::textualizer::{extract_grounding_answer, render_feedback, summarize, FeedbackTemplateSet, SummaryVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub n_samples: usize,
    pub max_iterations: usize,
    pub max_rejections_per_step: usize,
    pub code_retry_limit: usize,
    pub planner_retry_limit: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { n_samples: 5, max_iterations: 5, max_rejections_per_step: 3, code_retry_limit: 3, planner_retry_limit: 3 }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_samples", self.n_samples),
            ("max_iterations", self.max_iterations),
            ("max_rejections_per_step", self.max_rejections_per_step),
            ("code_retry_limit", self.code_retry_limit),
            ("planner_retry_limit", self.planner_retry_limit),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("loop.{name} must be a positive integer"))),
            None => Ok(()),
        }
    }

    /// Most controller decisions one episode can make.
    pub fn max_decisions(&self) -> usize {
        self.max_iterations * (self.max_rejections_per_step + 1)
    }
}

/// The three language-model roles of one episode.
#[derive(Clone)]
pub struct Backends {
    pub planner: Arc<dyn LlmBackend>,
    pub coder: Arc<dyn LlmBackend>,
    pub summarizer: Arc<dyn LlmBackend>,
}

impl Backends {
    /// One backend serving every role.
    pub fn shared(backend: Arc<dyn LlmBackend>) -> Self {
        Self { planner: backend.clone(), coder: backend.clone(), summarizer: backend }
    }
}

/// Supplies backends per episode, keyed by a stable episode id.
pub trait BackendProvider: Send + Sync {
    fn for_episode(&self, key: &str) -> Result<Backends>;
}

impl BackendProvider for Backends {
    fn for_episode(&self, _key: &str) -> Result<Backends> {
        Ok(self.clone())
    }
}

/// Everything an episode needs besides the controller.
#[derive(Clone)]
pub struct Components {
    pub templates: PromptTemplates,
    pub feedback: FeedbackTemplateSet,
    pub backends: Arc<dyn BackendProvider>,
    pub toolkits: Arc<dyn ToolkitProvider>,
    /// Keep every prompt and completion in the episode result.
    pub record_exchanges: bool,
}

impl Components {
    pub fn new(backends: Arc<dyn BackendProvider>, toolkits: Arc<dyn ToolkitProvider>) -> Self {
        Self {
            templates: PromptTemplates::builtin(),
            feedback: FeedbackTemplateSet::builtin(),
            backends,
            toolkits,
            record_exchanges: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: String,
    pub step: usize,
    pub prompt: String,
    pub completion: std::result::Result<String, String>,
}

struct Tap<'a> {
    inner: &'a dyn LlmBackend,
    role: &'static str,
    step: &'a AtomicUsize,
    calls: AtomicUsize,
    log: Option<&'a Mutex<Vec<Exchange>>>,
}

impl<'a> Tap<'a> {
    fn new(inner: &'a dyn LlmBackend, role: &'static str, step: &'a AtomicUsize, log: Option<&'a Mutex<Vec<Exchange>>>) -> Self {
        Self { inner, role, step, calls: AtomicUsize::new(0), log }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmBackend for Tap<'_> {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let reply = self.inner.complete(prompt);
        if let Some(log) = self.log {
            log.lock().unwrap_or_else(|e| e.into_inner()).push(Exchange {
                role: self.role.to_string(),
                step: self.step.load(Ordering::Relaxed),
                prompt: prompt.to_string(),
                completion: reply.as_ref().map(Clone::clone).map_err(|e| e.to_string()),
            });
        }
        reply
    }

    fn identity(&self) -> &str {
        self.inner.identity()
    }
}

/// What the controller sees when choosing.
pub struct DecisionInput<'a> {
    pub query: &'a Query,
    pub instructions: &'a InstructionSet,
    pub memory: &'a StateMemory,
    pub meta: &'a MetaInfo,
}

/// Inference-time instruction selection.
pub trait Policy: Send + Sync {
    fn decide(&self, input: &DecisionInput<'_>, rng: &mut ChaCha8Rng) -> Result<ActionDecision>;
}

/// The trained Q-network with its embedding provider.
pub struct DqnPolicy {
    pub net: QNetwork,
    pub embedder: Arc<dyn EmbeddingProvider>,
}

impl Policy for DqnPolicy {
    fn decide(&self, input: &DecisionInput<'_>, _rng: &mut ChaCha8Rng) -> Result<ActionDecision> {
        let v = embed_state(input.query, input.instructions, input.memory, input.meta, &*self.embedder)?;
        decide(self.net.forward(&v)?, input.instructions)
    }
}

fn uniform_scores(n: usize) -> Vec<f64> {
    vec![1.0 / (n + 1) as f64; n + 1]
}

fn fixed_decision(d: &InstructionSet, index: usize) -> ActionDecision {
    let scores = uniform_scores(d.len());
    ActionDecision {
        combined: d.confidences().iter().map(|p| p * scores[0]).collect(),
        scores,
        choice: Choice::Accept { index, instruction: d.samples()[index].clone() },
        explored: false,
    }
}

/// Always takes the planner's most confident instruction.
pub struct HighestConfidence;

impl Policy for HighestConfidence {
    fn decide(&self, input: &DecisionInput<'_>, _rng: &mut ChaCha8Rng) -> Result<ActionDecision> {
        Ok(fixed_decision(input.instructions, input.instructions.most_confident()))
    }
}

/// Accepts a uniformly random instruction.
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn decide(&self, input: &DecisionInput<'_>, rng: &mut ChaCha8Rng) -> Result<ActionDecision> {
        use rand::Rng;
        Ok(fixed_decision(input.instructions, rng.gen_range(0..input.instructions.len())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    /// The summarizer produced an answer.
    Answered,
    /// The planner answered directly.
    Shortcut,
    /// The iteration cap was reached.
    Capped,
    /// A backend failed.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub instruction: String,
    pub confidence: f64,
    pub instruction_index: usize,
    pub rejections: usize,
    pub forced: bool,
    pub script: String,
    pub code_attempts: usize,
    pub succeeded: bool,
    pub feedback: String,
    pub variables: Vec<(String, String)>,
    pub verdict: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: usize,
    /// Instruction index, or `n` for a rejection.
    pub action: usize,
    pub n: usize,
    pub explored: bool,
    pub forced: bool,
    pub scores: Vec<f64>,
    #[serde(skip)]
    pub state: Option<Arc<SparseVec>>,
}

impl DecisionRecord {
    pub fn is_reject(&self) -> bool {
        self.action == self.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub answer: Answer,
    pub steps_taken: usize,
    pub end: EpisodeEnd,
    pub error: Option<String>,
    pub steps: Vec<StepRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub reward_trace: Option<RewardTrace>,
    /// Reward credited to each decision during training.
    pub decision_rewards: Vec<f64>,
    pub planner_calls: usize,
    pub coder_calls: usize,
    pub summarizer_calls: usize,
    pub exchanges: Vec<Exchange>,
}

impl EpisodeResult {
    /// Index of the first accepted instruction.
    pub fn first_accepted(&self) -> Option<usize> {
        self.decisions.iter().find(|d| !d.is_reject()).map(|d| d.action)
    }
}

/// Failures that end an episode unanswered instead of failing the run.
fn ends_episode(e: &Error) -> bool {
    matches!(
        e,
        Error::BackendUnavailable(_) | Error::ToolkitUnavailable(_) | Error::ToolkitProtocol(_) | Error::PlannerParse(_)
    )
}

fn parse_box_answer(text: &str) -> Option<BoundingBox> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    BoundingBox::parse_csv(inner).ok()
}

fn verdict_answer(task: TaskKind, text: &str) -> Answer {
    match task {
        TaskKind::Vqa => Answer::Text { text: text.to_string() },
        TaskKind::Grounding => match parse_box_answer(text) {
            Some(bbox) => Answer::Box { bbox },
            None => Answer::Unanswered,
        },
    }
}

type DecideFn<'a> = dyn FnMut(&DecisionInput<'_>, Option<usize>) -> Result<(ActionDecision, Option<Arc<SparseVec>>)> + 'a;

struct LoopState {
    answer: Answer,
    end: EpisodeEnd,
    error: Option<String>,
    steps: Vec<StepRecord>,
    decisions: Vec<DecisionRecord>,
}

/// Runs one episode. `decide` receives `Some(i)` when acceptance of `i` is forced.
fn run_loop(
    query: &Query,
    cfg: &LoopConfig,
    comps: &Components,
    backends: &Backends,
    toolkit: &dyn PerceptionToolkit,
    decide: &mut DecideFn<'_>,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let log = comps.record_exchanges.then(|| Mutex::new(Vec::new()));
    let step_no = AtomicUsize::new(1);
    let planner = Tap::new(&*backends.planner, "planner", &step_no, log.as_ref());
    let coder = Tap::new(&*backends.coder, "coder", &step_no, log.as_ref());
    let summarizer = Tap::new(&*backends.summarizer, "summarizer", &step_no, log.as_ref());
    let mut st = LoopState { answer: Answer::Unanswered, end: EpisodeEnd::Capped, error: None, steps: Vec::new(), decisions: Vec::new() };
    let outcome = episode_body(query, cfg, comps, &planner, &coder, &summarizer, toolkit, decide, &step_no, &mut st);
    if let Err(e) = outcome {
        if !ends_episode(&e) {
            return Err(e);
        }
        st.answer = Answer::Unanswered;
        st.end = EpisodeEnd::Aborted;
        st.error = Some(e.to_string());
    }
    Ok(EpisodeResult {
        answer: st.answer,
        steps_taken: st.steps.len(),
        end: st.end,
        error: st.error,
        steps: st.steps,
        decisions: st.decisions,
        reward_trace: None,
        decision_rewards: Vec::new(),
        planner_calls: planner.calls(),
        coder_calls: coder.calls(),
        summarizer_calls: summarizer.calls(),
        exchanges: log.map(|l| l.into_inner().unwrap_or_else(|e| e.into_inner())).unwrap_or_default(),
    })
}

#[allow(clippy::too_many_arguments)]
fn episode_body(
    query: &Query,
    cfg: &LoopConfig,
    comps: &Components,
    planner: &Tap<'_>,
    coder: &dyn LlmBackend,
    summarizer: &dyn LlmBackend,
    toolkit: &dyn PerceptionToolkit,
    decide: &mut DecideFn<'_>,
    step_no: &AtomicUsize,
    st: &mut LoopState,
) -> Result<()> {
    let meta = MetaInfo::for_task(query.task_kind());
    let mut mem = StateMemory::new();
    let mut session = Session::new(toolkit.root_patch());
    for iteration in 1..=cfg.max_iterations {
        let step = mem.current_step();
        step_no.store(step, Ordering::Relaxed);
        let ctx = PromptContext { query, memory: &mem, meta: &meta, step };

        let mut rejections = 0;
        let (d, index, forced) = loop {
            // Parse retries draw on the same per-episode planner budget as decisions.
            let remaining = cfg.max_decisions().saturating_sub(planner.calls());
            if remaining == 0 {
                return Err(Error::PlannerParse("planner call budget exhausted by unparseable replies".into()));
            }
            let retries = cfg.planner_retry_limit.min(remaining);
            let response = generate_instructions(&comps.templates, &ctx, cfg.n_samples, planner, retries)?;
            let d = match response.parsed {
                PlannerOutput::FinalAnswer(text) => {
                    st.answer = match query.task_kind() {
                        TaskKind::Grounding => match extract_grounding_answer(session.get(FINAL_ANSWER)) {
                            Answer::Unanswered => verdict_answer(TaskKind::Grounding, &text),
                            a => a,
                        },
                        TaskKind::Vqa => verdict_answer(TaskKind::Vqa, &text),
                    };
                    st.end = EpisodeEnd::Shortcut;
                    return Ok(());
                }
                PlannerOutput::Instructions(d) => d,
            };
            let input = DecisionInput { query, instructions: &d, memory: &mem, meta: &meta };
            let forced = (rejections >= cfg.max_rejections_per_step).then(|| d.most_confident());
            let (decision, state) = decide(&input, forced)?;
            let choice = match forced {
                Some(i) => Choice::Accept { index: i, instruction: d.samples()[i].clone() },
                None => decision.choice.clone(),
            };
            st.decisions.push(DecisionRecord {
                step,
                action: choice.action(d.len()),
                n: d.len(),
                explored: decision.explored,
                forced: forced.is_some(),
                scores: decision.scores,
                state,
            });
            match choice {
                Choice::Reject => rejections += 1,
                Choice::Accept { index, .. } => break (d, index, forced.is_some()),
            }
        };
        let instruction = d.samples()[index].clone();

        let outcome = generate_and_execute(&comps.templates, &ctx, &instruction, coder, toolkit, &mut session, cfg.code_retry_limit)?;
        let (feedback, assignments, script) = if outcome.succeeded() {
            let fb = render_feedback(&comps.feedback, &outcome.trace, step)?;
            let vars = outcome.trace.assignments().into_iter().map(|(n, v)| (n, v.to_string())).collect();
            (fb, vars, outcome.script.clone())
        } else {
            let msg = outcome.trace.error_message().unwrap_or_default();
            (FeedbackEntry::new(step, format!("Execution error: {msg}"))?, Vec::new(), String::new())
        };
        let final_value = if outcome.succeeded() { outcome.trace.env.get(FINAL_ANSWER).cloned() } else { None };
        st.steps.push(StepRecord {
            step,
            instruction: instruction.text().to_string(),
            confidence: instruction.confidence(),
            instruction_index: index,
            rejections,
            forced,
            script: outcome.script.clone(),
            code_attempts: outcome.attempts.len(),
            succeeded: outcome.succeeded(),
            feedback: feedback.text.clone(),
            variables: assignments.clone(),
            verdict: None,
        });
        mem.append(instruction, script, feedback, assignments)?;

        let ctx = PromptContext { query, memory: &mem, meta: &meta, step: mem.len() };
        let mut summarized = false;
        if let Some(value) = &final_value {
            if query.task_kind() == TaskKind::Grounding {
                let a = extract_grounding_answer(Some(value));
                if a.is_answered() {
                    st.answer = a;
                    st.end = EpisodeEnd::Answered;
                    return Ok(());
                }
            }
            summarized = true;
            let verdict = summarize(&comps.templates, &ctx, summarizer)?;
            if let SummaryVerdict::Answer(text) = &verdict {
                st.steps.last_mut().expect("step recorded").verdict = Some(text.clone());
                let a = verdict_answer(query.task_kind(), text);
                if a.is_answered() {
                    st.answer = a;
                    st.end = EpisodeEnd::Answered;
                    return Ok(());
                }
            }
        }
        if iteration == cfg.max_iterations && !summarized {
            if let SummaryVerdict::Answer(text) = summarize(&comps.templates, &ctx, summarizer)? {
                st.steps.last_mut().expect("step recorded").verdict = Some(text.clone());
                st.answer = verdict_answer(query.task_kind(), &text);
            }
        }
    }
    st.end = EpisodeEnd::Capped;
    Ok(())
}

fn forced_choice(d: &InstructionSet, index: usize) -> ActionDecision {
    fixed_decision(d, index)
}

/// Runs one inference episode with `policy`.
pub fn run_episode(
    query: &Query,
    cfg: &LoopConfig,
    comps: &Components,
    policy: &dyn Policy,
    rng: &mut ChaCha8Rng,
    key: &str,
) -> Result<EpisodeResult> {
    let backends = comps.backends.for_episode(key)?;
    let toolkit = comps.toolkits.toolkit_for(query.image_ref())?;
    let mut decide = |input: &DecisionInput<'_>, forced: Option<usize>| {
        let d = match forced {
            Some(i) => forced_choice(input.instructions, i),
            None => policy.decide(input, rng)?,
        };
        Ok((d, None))
    };
    run_loop(query, cfg, comps, &backends, &*toolkit, &mut decide)
}

fn key_seed(seed: u64, key: &str) -> u64 {
    key.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Runs every row on `workers` threads. Each row gets its own generator
/// seeded from `seed` and its id, so results do not depend on scheduling.
pub fn evaluate(
    rows: &[DatasetRow],
    cfg: &LoopConfig,
    comps: &Components,
    policy: &dyn Policy,
    workers: usize,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    let run = |row: &DatasetRow| {
        let query = row.to_query()?;
        let mut rng = ChaCha8Rng::seed_from_u64(key_seed(seed, &row.id));
        run_episode(&query, cfg, comps, policy, &mut rng, &row.id)
    };
    if workers <= 1 {
        return rows.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| rows.par_iter().map(run).collect())
}

/// Mutable training state: network, replay buffer, schedule and generator.
pub struct Trainer {
    pub net: QNetwork,
    pub buffer: ReplayBuffer,
    pub schedule: ExplorationSchedule,
    pub hyper: Hyperparams,
    pub rng: ChaCha8Rng,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub optimizer: OptimizerState,
    pub train_steps: u64,
    pub last_loss: Option<f64>,
}

impl Trainer {
    pub fn new(n_samples: usize, hyper: Hyperparams, seed: u64, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            net: QNetwork::for_samples(n_samples, seed),
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            schedule: hyper.schedule(),
            hyper,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
            embedder,
            optimizer: OptimizerState::new(hyper.optimizer),
            train_steps: 0,
            last_loss: None,
        }
    }
}

/// Per-decision rewards and the episode's cumulative trace.
///
/// A rejection at step `j` and a non-final accepted step `j` earn `-(j+1)`.
/// The last accepted step earns the final increment when the summarizer
/// answered right after it or the cap was reached; otherwise (direct planner
/// answer, backend failure) the final increment is added to the last decision.
pub fn assign_rewards(result: &EpisodeResult, gold: &Gold, hyper: &Hyperparams) -> (RewardTrace, Vec<f64>) {
    let (m, related) = score(&result.answer, gold);
    let mut trace = RewardTrace::new(hyper.alpha, hyper.r1);
    let mut rewards = Vec::with_capacity(result.decisions.len());
    let last_accept = result.decisions.iter().rposition(|d| !d.is_reject());
    let final_on_step = matches!(result.end, EpisodeEnd::Answered | EpisodeEnd::Capped);
    for (i, d) in result.decisions.iter().enumerate() {
        let t = d.step + 1;
        if d.is_reject() {
            rewards.push(-(t as f64));
        } else if final_on_step && Some(i) == last_accept {
            rewards.push(trace.push(true, m, related));
        } else {
            rewards.push(trace.push(false, 0.0, false));
        }
    }
    if !final_on_step || last_accept.is_none() {
        let inc = trace.push(true, m, related);
        if let Some(r) = rewards.last_mut() {
            *r += inc;
        }
    }
    (trace, rewards)
}

/// Runs one exploring episode, stores its transitions and performs one
/// training step per decision once learning has started.
pub fn run_training_episode(
    row: &DatasetRow,
    cfg: &LoopConfig,
    comps: &Components,
    trainer: &mut Trainer,
    key: &str,
) -> Result<EpisodeResult> {
    let query = row.to_query()?;
    let backends = comps.backends.for_episode(key)?;
    let toolkit = comps.toolkits.toolkit_for(query.image_ref())?;
    let mut result = {
        let Trainer { net, schedule, rng, embedder, .. } = &mut *trainer;
        let mut decide = |input: &DecisionInput<'_>, forced: Option<usize>| {
            let v = embed_state(input.query, input.instructions, input.memory, input.meta, &**embedder)?;
            schedule.observe();
            let decision = match forced {
                Some(i) => forced_choice(input.instructions, i),
                None => select(net, &v, input.instructions, schedule, true, rng)?,
            };
            Ok((decision, Some(Arc::new(SparseVec::from_dense(&v)))))
        };
        run_loop(&query, cfg, comps, &backends, &*toolkit, &mut decide)?
    };
    let (trace, rewards) = assign_rewards(&result, &row.gold, &trainer.hyper);
    let states: Vec<Arc<SparseVec>> =
        result.decisions.iter().map(|d| d.state.clone().expect("training decisions carry states")).collect();
    for (i, d) in result.decisions.iter().enumerate() {
        trainer.buffer.push(Transition {
            state: states[i].clone(),
            action: d.action,
            reward: rewards[i],
            next_state: states.get(i + 1).cloned(),
        });
    }
    let h = trainer.hyper;
    for _ in 0..result.decisions.len() {
        if trainer.buffer.len() >= h.batch && trainer.schedule.learning() {
            let loss = trainer.net.train_step_with(
                &trainer.buffer,
                h.batch,
                h.lr,
                h.gamma,
                &mut trainer.optimizer,
                &mut trainer.rng,
            )?;
            trainer.train_steps += 1;
            trainer.last_loss = Some(loss);
        }
    }
    result.reward_trace = Some(trace);
    result.decision_rewards = rewards;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Stop before an episode could push the observation count past this.
    pub max_observations: u64,
    pub max_episodes: usize,
    pub stop_on_convergence: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_observations: 30_000, max_episodes: usize::MAX, stop_on_convergence: true }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: QNetwork,
    /// Final cumulative reward of each episode, in training order.
    pub episode_rewards: Vec<f64>,
    pub observations: u64,
    pub train_steps: u64,
    pub converged: bool,
}

/// Trains a controller over `rows`, reshuffled with `seed` every pass,
/// until the reward curve converges or a budget runs out.
pub fn train(
    rows: &[DatasetRow],
    cfg: &LoopConfig,
    comps: &Components,
    hyper: Hyperparams,
    seed: u64,
    embedder: Arc<dyn EmbeddingProvider>,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    if rows.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    cfg.validate()?;
    let mut trainer = Trainer::new(cfg.n_samples, hyper, seed, embedder);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut rewards = Vec::new();
    let mut learned = Vec::new();
    let mut converged = false;
    let budget = cfg.max_decisions() as u64;
    'outer: for epoch in 0.. {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for i in order {
            if rewards.len() >= opts.max_episodes || trainer.schedule.observations + budget > opts.max_observations {
                break 'outer;
            }
            let row = &rows[i];
            // Rewards are flat while every action is random, which would
            // look converged; only judge episodes played once learning runs
            // and exploration is no longer certain.
            let s = &trainer.schedule;
            let judged = s.learning() && s.threshold(s.observations + 1) < 1.0;
            let result = run_training_episode(row, cfg, comps, &mut trainer, &format!("{}#{epoch}", row.id))?;
            let reward = result.reward_trace.as_ref().map_or(0.0, RewardTrace::last);
            rewards.push(reward);
            if judged {
                learned.push(reward);
            }
            if opts.stop_on_convergence && crate::controller::has_converged(&learned) {
                converged = true;
                break 'outer;
            }
        }
    }
    Ok(TrainOutcome {
        net: trainer.net,
        episode_rewards: rewards,
        observations: trainer.schedule.observations,
        train_steps: trainer.train_steps,
        converged,
    })
}
