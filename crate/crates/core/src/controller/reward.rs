use serde::{Deserialize, Serialize};

/// Reward increment for step `t`: `-t` before the end, `+alpha*m` for a
/// related final answer and `-alpha` otherwise.
pub fn increment(t: usize, is_final: bool, m: f64, related: bool, alpha: f64) -> f64 {
    match (is_final, related) {
        (false, _) => -(t as f64),
        (true, true) => alpha * m,
        (true, false) => -alpha,
    }
}

/// Cumulative rewards `R^1, R^2, ...` of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrace {
    values: Vec<f64>,
    alpha: f64,
}

impl RewardTrace {
    pub fn new(alpha: f64, r1: f64) -> Self {
        Self { values: vec![r1], alpha }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the latest entry (1-based).
    pub fn t(&self) -> usize {
        self.values.len()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trace starts non-empty")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Appends `R^{t+1}` and returns the increment.
    pub fn push(&mut self, is_final: bool, m: f64, related: bool) -> f64 {
        let inc = increment(self.t() + 1, is_final, m, related, self.alpha);
        self.values.push(self.last() + inc);
        inc
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Functional form of [`RewardTrace::push`]: `t = 1` restarts at `R^1`,
/// any later `t` extends `prev` truncated to its first `t - 1` entries.
pub fn step_reward(prev: &RewardTrace, t: usize, is_final: bool, m: f64, related: bool) -> RewardTrace {
    if t <= 1 {
        return RewardTrace::new(prev.alpha, prev.values[0]);
    }
    let keep = (t - 1).min(prev.values.len());
    let mut next = RewardTrace { values: prev.values[..keep].to_vec(), alpha: prev.alpha };
    next.push(is_final, m, related);
    next
}

pub const CONVERGENCE_WINDOW: usize = 500;

/// True when the moving averages of the last three 500-episode windows
/// each differ from the previous one by less than 1%.
pub fn has_converged(history: &[f64]) -> bool {
    let w = CONVERGENCE_WINDOW;
    if history.len() < 3 * w {
        return false;
    }
    let tail = &history[history.len() - 3 * w..];
    let means: Vec<f64> = tail.chunks(w).map(|c| c.iter().sum::<f64>() / w as f64).collect();
    means.windows(2).all(|p| {
        let diff = (p[1] - p[0]).abs();
        diff == 0.0 || diff < 0.01 * p[0].abs()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_traces() {
        let mut one = RewardTrace::new(100.0, 100.0);
        one.push(true, 1.0, true);
        assert_eq!(one.values(), [100.0, 200.0]);

        let mut three = RewardTrace::new(100.0, 100.0);
        three.push(false, 0.0, false);
        three.push(true, 1.0, true);
        assert_eq!(three.values(), [100.0, 98.0, 198.0]);

        let mut unrelated = RewardTrace::new(100.0, 100.0);
        unrelated.push(true, 0.0, false);
        assert_eq!(unrelated.values(), [100.0, 0.0]);
    }

    #[test]
    fn grounding_partial_credit() {
        let mut r = RewardTrace::new(100.0, 100.0);
        r.push(false, 0.0, false);
        r.push(true, 0.6, true);
        assert!((r.last() - 158.0).abs() < 1e-12);
    }

    #[test]
    fn functional_form_matches() {
        let start = RewardTrace::new(100.0, 100.0);
        let r2 = step_reward(&start, 2, false, 0.0, false);
        let r3 = step_reward(&r2, 3, true, 1.0, true);
        assert_eq!(r3.values(), [100.0, 98.0, 198.0]);
        assert_eq!(step_reward(&r3, 1, false, 0.0, false).values(), [100.0]);
    }

    proptest! {
        #[test]
        fn recurrence_holds(steps in 0usize..8, m in 0.0f64..=1.0, related: bool) {
            let mut r = RewardTrace::new(100.0, 100.0);
            for _ in 0..steps {
                r.push(false, 0.0, false);
            }
            r.push(true, m, related);
            let v = r.values();
            for t in 2..v.len() {
                prop_assert_eq!(v[t - 1] - v[t - 2], -(t as f64));
            }
            let last = v[v.len() - 1] - v[v.len() - 2];
            let expect = if related { 100.0 * m } else { -100.0 };
            prop_assert!((last - expect).abs() < 1e-9);
            prop_assert!((100.0 + r.increments().iter().sum::<f64>() - r.last()).abs() < 1e-9);
        }
    }

    #[test]
    fn convergence() {
        assert!(has_converged(&vec![42.0; 2000]));
        assert!(!has_converged(&vec![42.0; 1499]));
        let growing: Vec<f64> = (0..1500).map(|i| 100.0 * 1.05f64.powi((i / 500) as i32)).collect();
        assert!(!has_converged(&growing));
        assert!(has_converged(&vec![0.0; 1500]));
    }
}
