//! GoalLadder: reinforcement learning from a single language instruction.
//!
//! An agent collects experience while a pairwise comparator (a simulated
//! noisy oracle, a replay log, or a remote vision-language model) discovers
//! candidate goal observations and ranks them with ELO ratings. The
//! top-rated goal becomes the agent's target, and rewards are distances to
//! it in an embedding space, relabeled periodically across the replay buffer.

pub mod agent;
pub mod checkpoint;
pub mod comparator;
pub mod config;
pub mod embedding;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod orchestrator;
pub mod pnm;
pub mod rating;
pub mod seeding;
pub mod types;

pub use error::{Error, Result};
pub use types::{CandidateGoal, GoalId, LanguageInstruction, Observation, ObservationKind, Verdict};
