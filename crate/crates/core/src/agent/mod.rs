//! Off-policy entropy-regularized actor-critic with a relabelable replay buffer.

mod replay;
mod sac;

pub use replay::{ReplayBuffer, Transition};
pub use sac::{AgentConfig, Losses, Sac, SacBatch};
