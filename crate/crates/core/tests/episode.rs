use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vreason_core::controller::{ActionDecision, Choice, HashEmbedding, Hyperparams, QNetwork};
use vreason_core::harness::{DatasetRow, Gold};
use vreason_core::llm::{LlmBackend, ScriptedBackend};
use vreason_core::orchestrator::{
    run_episode, run_training_episode, train, Backends, Components, DecisionInput, EpisodeEnd, HighestConfidence,
    LoopConfig, Policy, SyntheticScenes, TrainOptions, Trainer,
};
use vreason_core::perception::{Scene, SceneObject};
use vreason_core::state::{Answer, BoundingBox, Query, TaskKind};
use vreason_core::Error;

fn object(name: &str, b: [f64; 4], color: &str, depth: f64) -> SceneObject {
    let mut attributes = BTreeMap::new();
    attributes.insert("color".to_string(), color.to_string());
    SceneObject { name: name.into(), bbox: BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(), attributes, depth }
}

fn street() -> Scene {
    let mut qa = BTreeMap::new();
    qa.insert("What color is the car?".to_string(), "yellow".to_string());
    Scene {
        format_version: 1,
        width: 640.0,
        height: 480.0,
        objects: vec![
            object("bus", [20.0, 200.0, 220.0, 330.0], "yellow", 4.0),
            object("bus", [400.0, 210.0, 600.0, 340.0], "red", 6.0),
            object("car", [260.0, 260.0, 360.0, 330.0], "yellow", 5.0),
        ],
        caption: "two buses and a car on a street".into(),
        qa,
    }
}

fn components(planner: &Arc<ScriptedBackend>, coder: &Arc<ScriptedBackend>, summarizer: &Arc<ScriptedBackend>) -> Components {
    let mut scenes = SyntheticScenes::default();
    scenes.insert("street.json", street());
    let backends = Backends { planner: planner.clone(), coder: coder.clone(), summarizer: summarizer.clone() };
    Components::new(Arc::new(backends), Arc::new(scenes))
}

fn plan(lines: &[(&str, f64)]) -> String {
    lines.iter().enumerate().map(|(i, (t, p))| format!("{}. {t} (probability: {p})", i + 1)).collect::<Vec<_>>().join("\n")
}

fn scripted(name: &str, replies: &[&str]) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(name, replies.iter().map(|s| s.to_string())))
}

fn query(text: &str) -> Query {
    Query::new(text, "street.json", TaskKind::Vqa).unwrap()
}

fn run(comps: &Components, q: &Query, cfg: &LoopConfig, policy: &dyn Policy) -> vreason_core::orchestrator::EpisodeResult {
    run_episode(q, cfg, comps, policy, &mut ChaCha8Rng::seed_from_u64(0), "ep").unwrap()
}

const COLOR_PLAN: [(&str, f64); 5] = [
    ("ask what color the car is", 0.9),
    ("find the car", 0.5),
    ("describe the image", 0.3),
    ("count the cars", 0.2),
    ("check whether there is a car", 0.1),
];

#[test]
fn one_step_episode() {
    let planner = scripted("p", &[&plan(&COLOR_PLAN)]);
    let coder = scripted("c", &["final_answer = image_patch.simple_query(\"What color is the car?\")"]);
    let summarizer = scripted("s", &["yellow"]);
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("What color is the car?"), &LoopConfig::default(), &HighestConfidence);
    assert_eq!(r.steps_taken, 1);
    assert_eq!(r.end, EpisodeEnd::Answered);
    assert_eq!(r.answer, Answer::Text { text: "yellow".into() });
    assert_eq!((r.planner_calls, r.coder_calls, r.summarizer_calls), (1, 1, 1));
}

const FIND_BUSES: &str = "find all buses in the image";
const CHECK_LEFT: &str = "check whether the leftmost bus is yellow";

fn two_step_backends() -> (Arc<ScriptedBackend>, Arc<ScriptedBackend>, Arc<ScriptedBackend>) {
    let step1 = plan(&[(FIND_BUSES, 0.8), ("describe the image", 0.4), ("count the buses", 0.3), ("find the car", 0.2), ("ask about colors", 0.1)]);
    let step2 = plan(&[(CHECK_LEFT, 0.85), ("describe the image", 0.4), ("count the buses", 0.3), ("find the car", 0.2), ("ask about colors", 0.1)]);
    let planner = scripted("p", &[&step1, &step2]);
    let coder = scripted(
        "c",
        &[
            "buses = image_patch.find(\"bus\")",
            "ordered = sort_horizontal(buses)\nleft_bus = ordered[0]\nfinal_answer = left_bus.verify_property(\"bus\", \"yellow\")",
        ],
    );
    let summarizer = scripted("s", &["yes"]);
    (planner, coder, summarizer)
}

#[test]
fn two_step_find_then_spatial_verify() {
    let (planner, coder, summarizer) = two_step_backends();
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("Is the bus on the left yellow?"), &LoopConfig::default(), &HighestConfidence);
    assert_eq!(r.steps_taken, 2);
    assert_eq!(r.end, EpisodeEnd::Answered);
    assert_eq!(r.answer, Answer::Text { text: "yes".into() });
    assert!(r.steps[0].feedback.starts_with("Detection result: 2 bus have been detected in image_patch."), "{}", r.steps[0].feedback);
    assert_eq!(r.summarizer_calls, 1);
}

#[test]
fn prompts_carry_exactly_the_previous_steps() {
    let (planner, coder, summarizer) = two_step_backends();
    let comps = components(&planner, &coder, &summarizer);
    run(&comps, &query("Is the bus on the left yellow?"), &LoopConfig::default(), &HighestConfidence);

    let p = planner.prompts();
    assert_eq!(p.len(), 2);
    assert!(p[0].contains("Current Step: 1") && !p[0].contains(FIND_BUSES) && !p[0].contains("Detection result"));
    assert!(p[1].contains("Current Step: 2") && p[1].contains(&format!("1. {FIND_BUSES}")));
    assert!(p[1].contains("Detection result: 2 bus") && p[1].contains("buses = image_patch.find(\"bus\")"));
    assert!(!p[1].contains(CHECK_LEFT) && !p[1].contains("sort_horizontal(buses)"));

    let c = coder.prompts();
    assert!(c[0].contains(&format!("Current Instruction: {FIND_BUSES}")) && !c[0].contains("Detection result"));
    assert!(c[1].contains(&format!("Current Instruction: {CHECK_LEFT}")) && c[1].contains("Detection result: 2 bus"));

    let s = summarizer.prompts();
    assert!(s[0].contains(&format!("1. {FIND_BUSES}\n2. {CHECK_LEFT}")));
    assert!(s[0].contains("final_answer: True"));
}

struct AlwaysReject;

impl Policy for AlwaysReject {
    fn decide(&self, input: &DecisionInput<'_>, _rng: &mut ChaCha8Rng) -> vreason_core::Result<ActionDecision> {
        let n = input.instructions.len();
        Ok(ActionDecision { scores: vec![0.0; n + 1], combined: vec![0.0; n], choice: Choice::Reject, explored: false })
    }
}

#[test]
fn always_reject_is_forced_to_accept() {
    let planner = scripted("p", &[&plan(&COLOR_PLAN)]);
    let coder = scripted("c", &["final_answer = image_patch.simple_query(\"What color is the car?\")"]);
    let summarizer = scripted("s", &["yellow"]);
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("What color is the car?"), &LoopConfig::default(), &AlwaysReject);
    assert_eq!(r.decisions.len(), 4);
    assert!(r.decisions[..3].iter().all(|d| d.is_reject() && !d.forced));
    assert!(r.decisions[3].forced && r.decisions[3].action == 0);
    assert_eq!(r.planner_calls, 4);
    assert_eq!(r.answer, Answer::Text { text: "yellow".into() });
}

#[test]
fn broken_code_and_rejections_stay_within_budget() {
    let cfg = LoopConfig::default();
    let planner = scripted("p", &[&plan(&COLOR_PLAN)]);
    let coder = scripted("c", &["final_answer = image_patch.simple_query("]);
    let summarizer = scripted("s", &["continue"]);
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("What color is the car?"), &cfg, &AlwaysReject);
    assert_eq!(r.answer, Answer::Unanswered);
    assert_eq!(r.end, EpisodeEnd::Capped);
    assert_eq!(r.steps_taken, cfg.max_iterations);
    assert_eq!(r.planner_calls, cfg.max_iterations * (cfg.max_rejections_per_step + 1));
    assert_eq!(r.coder_calls, cfg.max_iterations * cfg.code_retry_limit);
    assert_eq!(r.summarizer_calls, 1);
    assert!(r.steps.iter().all(|s| s.feedback.starts_with("Execution error: ") && s.forced));
}

#[test]
fn planner_answer_short_circuits() {
    let planner = scripted("p", &["Final answer: yellow"]);
    let (coder, summarizer) = (scripted("c", &[]), scripted("s", &[]));
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("What color is the car?"), &LoopConfig::default(), &HighestConfidence);
    assert_eq!((r.end, r.steps_taken, coder.calls()), (EpisodeEnd::Shortcut, 0, 0));
    assert_eq!(r.answer, Answer::Text { text: "yellow".into() });
}

#[test]
fn unavailable_backend_aborts_gracefully() {
    let planner = Arc::new(ScriptedBackend::with_results("p", [Err("connection refused".to_string())]));
    let (coder, summarizer) = (scripted("c", &[]), scripted("s", &[]));
    let comps = components(&planner, &coder, &summarizer);
    let r = run(&comps, &query("What color is the car?"), &LoopConfig::default(), &HighestConfidence);
    assert_eq!((r.end, r.answer.clone()), (EpisodeEnd::Aborted, Answer::Unanswered));
    assert!(r.error.unwrap().contains("connection refused"));
}

#[test]
fn unparseable_planner_aborts_after_retries() {
    let planner = scripted("p", &["I am not sure what to do."]);
    let (coder, summarizer) = (scripted("c", &[]), scripted("s", &[]));
    let comps = components(&planner, &coder, &summarizer);
    let cfg = LoopConfig::default();
    let r = run(&comps, &query("What color is the car?"), &cfg, &HighestConfidence);
    assert_eq!((r.end, r.planner_calls), (EpisodeEnd::Aborted, cfg.planner_retry_limit));
}

#[test]
fn grounding_takes_the_patch_without_summarizing() {
    let planner = scripted("p", &[&plan(&[("find the car", 0.9), ("a", 0.1), ("b", 0.1), ("c", 0.1), ("d", 0.1)])]);
    let coder = scripted("c", &["cars = image_patch.find(\"car\")\nfinal_answer = cars[0]"]);
    let summarizer = scripted("s", &["continue"]);
    let comps = components(&planner, &coder, &summarizer);
    let q = Query::new("the yellow car", "street.json", TaskKind::Grounding).unwrap();
    let r = run(&comps, &q, &LoopConfig::default(), &HighestConfidence);
    assert_eq!(r.answer, Answer::Box { bbox: BoundingBox::new(260.0, 260.0, 360.0, 330.0).unwrap() });
    assert_eq!(r.summarizer_calls, 0);
}

/// A trainer that always accepts the first instruction when every
/// confidence is 1: a zero network scores all actions equally and ties go
/// to the lowest index.
fn greedy_trainer() -> Trainer {
    let mut hyper = Hyperparams::default();
    hyper.learning_start = 0;
    hyper.eps0 = 1e-12;
    let mut t = Trainer::new(5, hyper, 0, Arc::new(HashEmbedding));
    t.net = QNetwork::zeros(1536, 512, 6);
    t
}

fn row(text: &str, gold: &str) -> DatasetRow {
    DatasetRow { id: "r".into(), query: text.into(), image: "street.json".into(), task: TaskKind::Vqa, gold: Gold::Text(gold.into()) }
}

fn certain(plan_lines: &[&str]) -> String {
    plan(&plan_lines.iter().map(|t| (*t, 1.0)).collect::<Vec<_>>())
}

#[test]
fn training_episode_rewards() {
    let color = certain(&["ask what color the car is"; 5]);
    let code = "final_answer = image_patch.simple_query(\"What color is the car?\")";
    let cases: [(&str, Vec<f64>, Vec<f64>); 2] = [("yellow", vec![100.0], vec![100.0, 200.0]), ("red", vec![-100.0], vec![100.0, 0.0])];
    for (gold, rewards, trace) in cases {
        let comps = components(&scripted("p", &[&color]), &scripted("c", &[code]), &scripted("s", &["yellow"]));
        let mut t = greedy_trainer();
        let r = run_training_episode(&row("What color is the car?", gold), &LoopConfig::default(), &comps, &mut t, "k").unwrap();
        assert_eq!(r.decision_rewards, rewards);
        assert_eq!(r.reward_trace.unwrap().values(), trace.as_slice());
        assert_eq!(t.buffer.len(), 1);
        assert!(t.buffer.get(0).unwrap().is_terminal());
    }

    let (_, coder, summarizer) = two_step_backends();
    let planner =scripted("p", &[&certain(&[FIND_BUSES; 5]), &certain(&[CHECK_LEFT; 5])]);
    let comps = components(&planner, &coder, &summarizer);
    let mut t = greedy_trainer();
    let r = run_training_episode(&row("Is the bus on the left yellow?", "yes"), &LoopConfig::default(), &comps, &mut t, "k").unwrap();
    let trace = r.reward_trace.clone().unwrap();
    assert_eq!(trace.values(), [100.0, 98.0, 198.0]);
    assert_eq!(r.decision_rewards, [-2.0, 100.0]);
    assert_eq!(100.0 + trace.increments().iter().sum::<f64>(), trace.last());
    assert!(!t.buffer.get(0).unwrap().is_terminal() && t.buffer.get(1).unwrap().is_terminal());
    assert_eq!(t.schedule.observations, 2);
}

#[test]
fn every_decision_becomes_a_transition() {
    // A zero network with confidences below 1 always prefers rejecting.
    let planner = scripted("p", &[&plan(&COLOR_PLAN)]);
    let coder = scripted("c", &["final_answer = image_patch.simple_query(\"What color is the car?\")"]);
    let comps = components(&planner, &coder, &scripted("s", &["yellow"]));
    let mut t = greedy_trainer();
    let r = run_training_episode(&row("What color is the car?", "yellow"), &LoopConfig::default(), &comps, &mut t, "k").unwrap();
    assert_eq!(r.decisions.len(), 4);
    assert_eq!(t.buffer.len(), r.decisions.len());
    assert_eq!(r.decision_rewards, [-2.0, -2.0, -2.0, 100.0]);
    let actions: Vec<usize> = t.buffer.iter().map(|tr| tr.action).collect();
    assert_eq!(actions, [5, 5, 5, 0]);
}

#[test]
fn training_needs_rows() {
    let comps = components(&scripted("p", &[]), &scripted("c", &[]), &scripted("s", &[]));
    let r = train(&[], &LoopConfig::default(), &comps, Hyperparams::default(), 1, Arc::new(HashEmbedding), TrainOptions::default());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn scripted_backend_sees_no_extra_calls() {
    let b = scripted("x", &["a"]);
    assert_eq!(b.complete("q").unwrap(), "a");
    assert_eq!(b.calls(), 1);
}

#[test]
fn planner_retries_share_the_call_budget() {
    let good = plan(&COLOR_PLAN);
    let replies: Vec<&str> = (0..60).map(|i| if i % 2 == 0 { "no idea" } else { good.as_str() }).collect();
    let planner = scripted("p", &replies);
    let coder = scripted("c", &["final_answer = image_patch.simple_query("]);
    let comps = components(&planner, &coder, &scripted("s", &["continue"]));
    let cfg = LoopConfig::default();
    let r = run(&comps, &query("What color is the car?"), &cfg, &AlwaysReject);
    assert_eq!(r.planner_calls, cfg.max_decisions());
    assert_eq!((r.end, r.answer), (EpisodeEnd::Aborted, Answer::Unanswered));
}
