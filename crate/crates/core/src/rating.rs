//! ELO arithmetic and the candidate goal buffer.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CandidateGoal, GoalId, Observation, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingConfig {
    /// Logistic sensitivity of the expected score to rating differences.
    #[serde(rename = "C")]
    pub scale: f64,
    /// Rating update speed.
    #[serde(rename = "T")]
    pub update_speed: f64,
    /// Rating given to a goal inserted into an empty buffer.
    pub default_rating: f64,
    /// Capacity enforced by each eviction pass.
    pub cap: usize,
}

impl Default for RatingConfig {
    fn default() -> Self {
        Self {
            scale: 400.0,
            update_speed: 32.0,
            default_rating: 1000.0,
            cap: 10,
        }
    }
}

impl RatingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("rating.C must be positive, got {}", self.scale)));
        }
        if !(self.update_speed > 0.0 && self.update_speed.is_finite()) {
            return Err(Error::Config(format!("rating.T must be positive, got {}", self.update_speed)));
        }
        if !self.default_rating.is_finite() {
            return Err(Error::Config("rating.default_rating must be finite".into()));
        }
        if self.cap < 1 {
            return Err(Error::Config("rating.cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Expected score of a player rated `rating` against one rated `opponent`.
pub fn expected_score(rating: f64, opponent: f64, scale: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((opponent - rating) / scale))
}

/// One ELO update for an ordered pair; zero-sum in the pair's total.
pub fn update_pair(first: f64, second: f64, verdict: Verdict, config: &RatingConfig) -> (f64, f64) {
    let (s_first, _) = verdict.outcome_scores();
    let e_first = expected_score(first, second, config.scale);
    // S_second = 1 - S_first and E_second = 1 - E_first, so the second
    // rating moves by exactly the negated delta.
    let delta = config.update_speed * (s_first - e_first);
    (first + delta, second - delta)
}

/// Bounded collection of rated candidate goals.
#[derive(Debug, Clone)]
pub struct GoalBuffer {
    goals: Vec<CandidateGoal>,
    config: RatingConfig,
    next_id: u64,
}

impl GoalBuffer {
    pub fn new(config: RatingConfig) -> Self {
        Self {
            goals: Vec::new(),
            config,
            next_id: 0,
        }
    }

    pub fn config(&self) -> &RatingConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn goals(&self) -> &[CandidateGoal] {
        &self.goals
    }

    pub fn get(&self, id: GoalId) -> Option<&CandidateGoal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn total_rating(&self) -> f64 {
        self.goals.iter().map(|g| g.rating).sum()
    }

    pub fn initial_rating(&self) -> f64 {
        if self.goals.is_empty() {
            self.config.default_rating
        } else {
            self.total_rating() / self.goals.len() as f64
        }
    }

    pub fn insert_candidate(&mut self, observation: Arc<Observation>, step: u64) -> GoalId {
        let rating = self.initial_rating();
        self.insert_with_rating(observation, step, rating)
    }

    fn insert_with_rating(&mut self, observation: Arc<Observation>, step: u64, rating: f64) -> GoalId {
        let id = GoalId(self.next_id);
        self.next_id += 1;
        self.goals.push(CandidateGoal {
            id,
            observation,
            rating,
            inserted_at: step,
        });
        id
    }

    /// Drops every goal and installs `observation` alone at the default
    /// rating. This is the whole of the greedy (unrated) baseline's update.
    pub fn replace_all(&mut self, observation: Arc<Observation>, step: u64) -> GoalId {
        self.goals.clear();
        let rating = self.config.default_rating;
        self.insert_with_rating(observation, step, rating)
    }

    fn top_index(&self) -> Option<usize> {
        self.goals
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.rating
                    .total_cmp(&b.rating)
                    .then(a.inserted_at.cmp(&b.inserted_at))
                    .then(a.id.cmp(&b.id))
            })
            .map(|(i, _)| i)
    }

    /// Highest-rated goal; ties go to the most recently inserted.
    pub fn top_goal(&self) -> Result<&CandidateGoal> {
        self.top_index().map(|i| &self.goals[i]).ok_or(Error::NoCandidates)
    }

    /// Removes lowest-rated goals (oldest first among ties) until the buffer
    /// fits its cap. The top goal is never removed.
    pub fn evict_to_cap(&mut self) -> Vec<GoalId> {
        let mut removed = Vec::new();
        let Some(top) = self.top_index().map(|i| self.goals[i].id) else {
            return removed;
        };
        while self.goals.len() > self.config.cap {
            let victim = self
                .goals
                .iter()
                .enumerate()
                .filter(|(_, g)| g.id != top)
                .min_by(|(_, a), (_, b)| {
                    a.rating
                        .total_cmp(&b.rating)
                        .then(a.inserted_at.cmp(&b.inserted_at))
                        .then(a.id.cmp(&b.id))
                })
                .map(|(i, _)| i);
            match victim {
                Some(i) => removed.push(self.goals.remove(i).id),
                None => break,
            }
        }
        removed
    }

    /// `count` ordered pairs of distinct goals, uniform over unordered pairs
    /// with random orientation. Empty when fewer than two goals exist.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<(GoalId, GoalId)> {
        let n = self.goals.len();
        if n < 2 {
            return Vec::new();
        }
        (0..count)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (self.goals[i].id, self.goals[j].id)
            })
            .collect()
    }

    pub fn apply_verdict(&mut self, first: GoalId, second: GoalId, verdict: Verdict) -> Result<()> {
        if first == second {
            return Err(Error::Config(format!("goal {first} cannot be compared with itself")));
        }
        let i = self.position(first)?;
        let j = self.position(second)?;
        let (ri, rj) = update_pair(self.goals[i].rating, self.goals[j].rating, verdict, &self.config);
        self.goals[i].rating = ri;
        self.goals[j].rating = rj;
        Ok(())
    }

    fn position(&self, id: GoalId) -> Result<usize> {
        self.goals.iter().position(|g| g.id == id).ok_or(Error::StaleGoalId(id))
    }
}
