//! Iterative visual reasoning loop: a planner proposes instructions, a learned
//! controller picks one, a reasoner turns it into an action script run against
//! perception skills, and a textualizer feeds the results back into memory.

pub mod controller;
pub mod error;
pub mod harness;
pub mod llm;
pub mod orchestrator;
pub mod perception;
pub mod planner;
pub mod prompt;
pub mod reasoner;
pub mod state;
pub mod textualizer;

pub use error::{Error, Result};
