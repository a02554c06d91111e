//! Desk-scale continuous-control environments with ground-truth potentials.
//!
//! Both tasks expose the same surface: a seeded reset, a clamped step, a
//! success predicate, a potential (higher is closer to the goal), and a
//! 64x64 grayscale renderer. Potentials feed the simulated oracle and
//! evaluation only; the learner never sees them.

mod mountain_car;
mod point_mass;
mod render;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Observation;

pub use mountain_car::MountainCar;
pub use point_mass::PointMass;
pub use render::{IMAGE_SIDE, IMAGE_SHAPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvName {
    PointMass2D,
    MountainCarContinuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationMode {
    Vector,
    Image64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub env_name: EnvName,
    pub episode_length: usize,
    pub observation_mode: ObservationMode,
    /// Point-mass: goal (x, y). Mountain-car: flag position. Defaults per task when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_position: Option<Vec<f64>>,
    pub success_radius: f64,
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            env_name: EnvName::PointMass2D,
            episode_length: 200,
            observation_mode: ObservationMode::Vector,
            goal_position: None,
            success_radius: 0.5,
            rng_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn goal(&self) -> Vec<f64> {
        self.goal_position.clone().unwrap_or_else(|| match self.env_name {
            EnvName::PointMass2D => point_mass::DEFAULT_GOAL.to_vec(),
            EnvName::MountainCarContinuous => vec![mountain_car::DEFAULT_FLAG],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub values: Vec<f64>,
    pub step_count: usize,
}

/// Task-specific physics behind [`Environment`].
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn sample_initial(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Advances `values` in place; `action` is already clamped to [-1, 1].
    fn advance(&self, values: &mut [f64], action: &[f64]);
    fn success(&self, values: &[f64]) -> bool;
    fn potential(&self, values: &[f64]) -> f64;
    /// Normalized policy input.
    fn features(&self, values: &[f64]) -> Vec<f64>;
    /// Vector-mode observation payload.
    fn vector_observation(&self, values: &[f64]) -> Vec<f64>;
    fn render(&self, values: &[f64], pixels: &mut [f64]);
}

pub struct Environment {
    config: EnvConfig,
    dynamics: Box<dyn Dynamics>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment").field("config", &self.config).finish()
    }
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        if config.episode_length < 1 {
            return Err(Error::Config("env.episode_length must be at least 1".into()));
        }
        if !(config.success_radius > 0.0) {
            return Err(Error::Config("env.success_radius must be positive".into()));
        }
        let goal = config.goal();
        let dynamics: Box<dyn Dynamics> = match config.env_name {
            EnvName::PointMass2D => Box::new(PointMass::new(&goal, config.success_radius)?),
            EnvName::MountainCarContinuous => Box::new(MountainCar::new(&goal)?),
        };
        Ok(Self { config, dynamics })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.dynamics.features(&vec![0.0; self.dynamics.state_dim()]).len()
    }

    pub fn action_dim(&self) -> usize {
        self.dynamics.action_dim()
    }

    pub fn reset<R: Rng>(&self, rng: &mut R, episode_id: u64) -> Result<(EnvState, Observation)> {
        let values = self.dynamics.sample_initial(rng);
        let state = EnvState { values, step_count: 0 };
        let obs = self.observe(&state, episode_id)?;
        Ok((state, obs))
    }

    pub fn step(&self, state: &EnvState, action: &[f64], episode_id: u64) -> Result<(EnvState, Observation, bool)> {
        if action.len() != self.action_dim() {
            return Err(Error::InvalidAction(format!(
                "expected {} components, got {}",
                self.action_dim(),
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidAction(format!("non-finite action {action:?}")));
        }
        let clamped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let mut values = state.values.clone();
        self.dynamics.advance(&mut values, &clamped);
        let next = EnvState {
            values,
            step_count: state.step_count + 1,
        };
        let done = next.step_count >= self.config.episode_length;
        let obs = self.observe(&next, episode_id)?;
        Ok((next, obs, done))
    }

    pub fn success(&self, state: &EnvState) -> bool {
        self.dynamics.success(&state.values)
    }

    pub fn potential(&self, state: &EnvState) -> f64 {
        self.dynamics.potential(&state.values)
    }

    pub fn potential_of_values(&self, values: &[f64]) -> f64 {
        self.dynamics.potential(values)
    }

    pub fn features(&self, state: &EnvState) -> Vec<f64> {
        self.dynamics.features(&state.values)
    }

    pub fn render(&self, state: &EnvState, episode_id: u64) -> Result<Observation> {
        let mut pixels = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
        self.dynamics.render(&state.values, &mut pixels);
        Ok(Observation::image(pixels, IMAGE_SHAPE, state.step_count as u64, episode_id)?
            .with_source_state(state.values.clone()))
    }

    pub fn observe(&self, state: &EnvState, episode_id: u64) -> Result<Observation> {
        match self.config.observation_mode {
            ObservationMode::Image64 => self.render(state, episode_id),
            ObservationMode::Vector => Ok(Observation::state_vector(
                self.dynamics.vector_observation(&state.values),
                state.step_count as u64,
                episode_id,
            )?
            .with_source_state(state.values.clone())),
        }
    }
}

/// Ground-truth task progress of the state behind an observation.
pub fn oracle_potential(obs: &Observation, env: &Environment) -> f64 {
    env.potential_of_values(obs.source_state())
}
