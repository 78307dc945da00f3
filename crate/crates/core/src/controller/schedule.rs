use rand::Rng;
use serde::{Deserialize, Serialize};

/// Random-exploration rule for controller training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub eps0: f64,
    pub decay: f64,
    pub interval: f64,
    pub learning_start: u64,
    /// Decisions observed so far.
    pub observations: u64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self { eps0: 0.2, decay: 0.02, interval: 200.0, learning_start: 1000, observations: 0 }
    }
}

impl ExplorationSchedule {
    /// `eps0 / (decay * omega / interval)`; unbounded at `omega = 0`.
    pub fn threshold(&self, omega: u64) -> f64 {
        if omega == 0 {
            return f64::INFINITY;
        }
        self.eps0 / (self.decay * omega as f64 / self.interval)
    }

    /// Records one decision and returns the new count.
    pub fn observe(&mut self) -> u64 {
        self.observations += 1;
        self.observations
    }

    /// Whether decision number `omega` is taken at random.
    pub fn explore<R: Rng>(&self, omega: u64, rng: &mut R) -> bool {
        // Draw unconditionally so the stream does not depend on the branch.
        let u: f64 = rng.gen();
        omega <= self.learning_start || u < self.threshold(omega).min(1.0)
    }

    pub fn learning(&self) -> bool {
        self.observations > self.learning_start
    }
}
