use rand::Rng;

use super::network::QNetwork;
use super::schedule::ExplorationSchedule;
use crate::error::{Error, Result};
use crate::state::{InstructionSample, InstructionSet};

#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    /// Zero-based index into the instruction set.
    Accept { index: usize, instruction: InstructionSample },
    Reject,
}

impl Choice {
    /// Action number: the index when accepting, `n` for a rejection.
    pub fn action(&self, n: usize) -> usize {
        match self {
            Choice::Accept { index, .. } => *index,
            Choice::Reject => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDecision {
    /// Softmax scores over the `N + 1` actions; the last one is reject.
    pub scores: Vec<f64>,
    /// `scores[i] * confidence_i` for the `N` instructions.
    pub combined: Vec<f64>,
    pub choice: Choice,
    /// The choice was drawn at random rather than from the scores.
    pub explored: bool,
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn combine(scores: &[f64], confidences: &[f64]) -> Vec<f64> {
    confidences.iter().zip(scores).map(|(p, s)| s * p).collect()
}

/// Accepts `argmax_i scores[i]*p_i` unless the reject score is strictly larger.
/// Returns `None` for a rejection.
pub fn choose(scores: &[f64], confidences: &[f64]) -> Option<usize> {
    let combined = combine(scores, confidences);
    let best = argmax(&combined);
    let reject = scores[confidences.len()];
    (reject <= combined[best]).then_some(best)
}

fn accept(d: &InstructionSet, index: usize) -> Choice {
    Choice::Accept { index, instruction: d.samples()[index].clone() }
}

/// Decision from precomputed scores, without exploration.
pub fn decide(scores: Vec<f64>, d: &InstructionSet) -> Result<ActionDecision> {
    if scores.len() != d.len() + 1 {
        return Err(Error::Shape { expected: d.len() + 1, actual: scores.len() });
    }
    let confidences = d.confidences();
    let combined = combine(&scores, &confidences);
    let choice = match choose(&scores, &confidences) {
        Some(i) => accept(d, i),
        None => Choice::Reject,
    };
    Ok(ActionDecision { scores, combined, choice, explored: false })
}

/// Scores `v` and applies the selection rule. In training mode the
/// schedule's current observation count decides whether a uniformly random
/// action in `0..=N` replaces it.
pub fn select<R: Rng>(
    net: &QNetwork,
    v: &[f64],
    d: &InstructionSet,
    sched: &ExplorationSchedule,
    training: bool,
    rng: &mut R,
) -> Result<ActionDecision> {
    let mut decision = decide(net.forward(v)?, d)?;
    if training && sched.explore(sched.observations, rng) {
        let action = rng.gen_range(0..=d.len());
        decision.choice = if action == d.len() { Choice::Reject } else { accept(d, action) };
        decision.explored = true;
    }
    Ok(decision)
}
