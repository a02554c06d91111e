use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Comparator, ComparatorQuery};
use crate::env::{oracle_potential, Environment};
use crate::error::{Error, Result};
use crate::seeding::Rng as StreamRng;
use crate::types::{Observation, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Probability that a decisive verdict is inverted.
    pub flip_probability: f64,
    /// Potential gap below which the oracle answers `NoDecision`.
    pub draw_threshold: f64,
    /// Falls back to a stream derived from the experiment seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            flip_probability: 0.1,
            draw_threshold: 0.0,
            rng_seed: None,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "oracle flip_probability must be in [0, 0.5), got {}",
                self.flip_probability
            )));
        }
        if !(self.draw_threshold >= 0.0) {
            return Err(Error::Config("oracle draw_threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

type Potential = Box<dyn Fn(&Observation) -> f64 + Send>;

/// Simulated comparator that prefers the observation with higher
/// ground-truth potential, inverting decisive answers with probability
/// `flip_probability`.
pub struct Oracle {
    config: OracleConfig,
    potential: Potential,
    rng: StreamRng,
}

impl Oracle {
    pub fn new(config: OracleConfig, seed: u64, potential: impl Fn(&Observation) -> f64 + Send + 'static) -> Result<Self> {
        config.validate()?;
        let rng = StreamRng::seed_from_u64(config.rng_seed.unwrap_or(seed));
        Ok(Self {
            config,
            potential: Box::new(potential),
            rng,
        })
    }

    pub fn for_env(config: OracleConfig, seed: u64, env: Environment) -> Result<Self> {
        Self::new(config, seed, move |obs| oracle_potential(obs, &env))
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn judge(&mut self, first: &Observation, second: &Observation) -> Verdict {
        let gap = (self.potential)(first) - (self.potential)(second);
        if gap == 0.0 || gap.abs() < self.config.draw_threshold {
            return Verdict::NoDecision;
        }
        let truth = if gap > 0.0 { Verdict::PreferFirst } else { Verdict::PreferSecond };
        if self.rng.random::<f64>() < self.config.flip_probability {
            truth.flipped()
        } else {
            truth
        }
    }
}

impl Comparator for Oracle {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        Ok(self.judge(&query.first, &query.second))
    }
}
