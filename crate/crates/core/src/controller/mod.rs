//! Learned instruction selection: state embedding, Q-network, exploration,
//! rewards and replay.

mod embedding;
mod network;
mod replay;
mod reward;
mod schedule;
mod select;

pub use embedding::{embed_state, serialize_state, EmbeddingProvider, HashEmbedding, HttpEmbedding, SparseVec, EMBED_DIM};
pub use network::{
    gradient_check, gradient_check_with, softmax, Checkpoint, Gradients, Optimizer, OptimizerState, QNetwork, HIDDEN_DIM,
};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{has_converged, increment, step_reward, RewardTrace, CONVERGENCE_WINDOW};
pub use schedule::ExplorationSchedule;
pub use select::{argmax, choose, combine, decide, select, ActionDecision, Choice};

use serde::{Deserialize, Serialize};

/// Learning constants for controller training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub r1: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub learning_start: u64,
    pub eps0: f64,
    pub eps_decay: f64,
    pub eps_interval: f64,
    pub buffer_capacity: usize,
    pub optimizer: Optimizer,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            r1: 100.0,
            gamma: 1.0,
            lr: 1e-4,
            batch: 128,
            learning_start: 1000,
            eps0: 0.2,
            eps_decay: 0.02,
            eps_interval: 200.0,
            buffer_capacity: 50_000,
            optimizer: Optimizer::default(),
        }
    }
}

impl Hyperparams {
    pub fn schedule(&self) -> ExplorationSchedule {
        ExplorationSchedule {
            eps0: self.eps0,
            decay: self.eps_decay,
            interval: self.eps_interval,
            learning_start: self.learning_start,
            observations: 0,
        }
    }
}
