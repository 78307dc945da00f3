use std::collections::VecDeque;
use std::sync::Arc;

use super::embedding::SparseVec;

/// One controller decision. States are shared so consecutive transitions
/// do not duplicate the vector they have in common.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<SparseVec>,
    pub action: usize,
    pub reward: f64,
    /// `None` exactly when the transition is terminal.
    pub next_state: Option<Arc<SparseVec>>,
}

impl Transition {
    pub fn terminal(state: impl Into<Arc<SparseVec>>, action: usize, reward: f64) -> Self {
        Self { state: state.into(), action, reward, next_state: None }
    }

    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}
