#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn vreason(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vreason")).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn plan(lines: &[(&str, f64)]) -> String {
    lines.iter().enumerate().map(|(i, (t, p))| format!("{}. {t} (probability: {p})", i + 1)).collect::<Vec<_>>().join("\n")
}

/// Writes the street scene, a scripted reply file and a config pointing at
/// both into `dir`; returns the config path.
pub fn scripted_config(dir: &Path, planner: &[String], coder: &[&str], summarizer: &[&str]) -> PathBuf {
    std::fs::create_dir_all(dir.join("scenes")).unwrap();
    std::fs::copy(fixtures().join("feedback/scene.json"), dir.join("scenes/street.json")).unwrap();
    let script = serde_json::json!({ "planner": planner, "coder": coder, "summarizer": summarizer });
    std::fs::write(dir.join("script.json"), script.to_string()).unwrap();
    let config = dir.join("config.txt");
    std::fs::write(&config, "llm.mode = scripted\nllm.script = script.json\npaths.scenes = scenes\n").unwrap();
    config
}

pub const FIND_BUSES: &str = "find all buses in the image";
pub const CHECK_LEFT: &str = "check whether the leftmost bus is yellow";

pub fn two_step_planner() -> Vec<String> {
    let others = [("describe the image", 0.4), ("count the buses", 0.3), ("find the car", 0.2), ("ask about colors", 0.1)];
    let mut step1 = vec![(FIND_BUSES, 0.8)];
    step1.extend(others);
    let mut step2 = vec![(CHECK_LEFT, 0.85)];
    step2.extend(others);
    vec![plan(&step1), plan(&step2)]
}

pub const TWO_STEP_CODE: [&str; 2] = [
    "buses = image_patch.find(\"bus\")",
    "ordered = sort_horizontal(buses)\nleft_bus = ordered[0]\nfinal_answer = left_bus.verify_property(\"bus\", \"yellow\")",
];
