use std::io::Write;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::orchestrator::{EpisodeResult, Exchange};

#[derive(Serialize)]
struct StepLine<'a> {
    episode: &'a str,
    t: usize,
    instruction: &'a str,
    confidence: f64,
    script: &'a str,
    feedback: &'a str,
    variables: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    exchanges: Vec<&'a Exchange>,
}

/// Writes episodes as JSON lines: one per completed step, then a closing
/// line with `t = steps_taken + 1` carrying the answer.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write_episode(&mut self, episode: &str, result: &EpisodeResult) -> Result<()> {
        for s in &result.steps {
            let line = StepLine {
                episode,
                t: s.step,
                instruction: &s.instruction,
                confidence: s.confidence,
                script: &s.script,
                feedback: &s.feedback,
                variables: s.variables.iter().map(|(k, v)| (k.clone(), json!(v))).collect(),
                exchanges: result.exchanges.iter().filter(|e| e.step == s.step).collect(),
            };
            serde_json::to_writer(&mut self.out, &line)?;
            self.out.write_all(b"\n")?;
        }
        let done = result.steps.len();
        let tail: Vec<&Exchange> = result.exchanges.iter().filter(|e| e.step > done).collect();
        let mut end = json!({
            "episode": episode,
            "t": done + 1,
            "end": result.end,
            "answer": result.answer.display(),
            "error": result.error,
        });
        if !tail.is_empty() {
            end["exchanges"] = json!(tail);
        }
        serde_json::to_writer(&mut self.out, &end)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
