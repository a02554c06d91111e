//! Shared domain types: observations, verdicts, candidate goals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationKind {
    StateVector,
    Image,
}

/// A flat numeric observation with shape metadata and capture provenance.
///
/// `source_state` carries the ground-truth environment state that produced
/// the observation. Only the simulated oracle and evaluation read it; the
/// learner sees `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    kind: ObservationKind,
    data: Vec<f64>,
    shape: Vec<usize>,
    pub step_index: u64,
    pub episode_id: u64,
    source_state: Vec<f64>,
}

impl Observation {
    pub fn state_vector(data: Vec<f64>, step_index: u64, episode_id: u64) -> Result<Self> {
        let shape = vec![data.len()];
        Self::new(ObservationKind::StateVector, data, shape, step_index, episode_id)
    }

    /// `shape` is `[height, width, channels]`.
    pub fn image(data: Vec<f64>, shape: [usize; 3], step_index: u64, episode_id: u64) -> Result<Self> {
        Self::new(ObservationKind::Image, data, shape.to_vec(), step_index, episode_id)
    }

    pub fn new(
        kind: ObservationKind,
        data: Vec<f64>,
        shape: Vec<usize>,
        step_index: u64,
        episode_id: u64,
    ) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::InvalidObservation(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        match kind {
            ObservationKind::Image => {
                if shape.len() != 3 {
                    return Err(Error::InvalidObservation(format!(
                        "image shape must be [h, w, c], got {shape:?}"
                    )));
                }
                if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidObservation(format!("pixel value {v} outside [0, 1]")));
                }
            }
            ObservationKind::StateVector => {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidObservation("non-finite state component".into()));
                }
            }
        }
        Ok(Self {
            kind,
            data,
            shape,
            step_index,
            episode_id,
            source_state: Vec::new(),
        })
    }

    pub fn with_source_state(mut self, state: Vec<f64>) -> Self {
        self.source_state = state;
        self
    }

    pub fn kind(&self) -> ObservationKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn source_state(&self) -> &[f64] {
        &self.source_state
    }

    pub fn same_layout(&self, other: &Observation) -> bool {
        self.kind == other.kind && self.shape == other.shape
    }
}

/// Three-way comparator judgment over an ordered pair of observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    NoDecision,
    PreferFirst,
    PreferSecond,
}

impl Verdict {
    /// Log encoding: -1 = no decision, 0 = first preferred, 1 = second preferred.
    pub fn code(self) -> i8 {
        match self {
            Verdict::NoDecision => -1,
            Verdict::PreferFirst => 0,
            Verdict::PreferSecond => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Verdict::NoDecision),
            0 => Some(Verdict::PreferFirst),
            1 => Some(Verdict::PreferSecond),
            _ => None,
        }
    }

    /// ELO outcome scores `(first, second)`: win 1, loss 0, draw 0.5 each.
    pub fn outcome_scores(self) -> (f64, f64) {
        match self {
            Verdict::PreferFirst => (1.0, 0.0),
            Verdict::PreferSecond => (0.0, 1.0),
            Verdict::NoDecision => (0.5, 0.5),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Verdict::PreferFirst => Verdict::PreferSecond,
            Verdict::PreferSecond => Verdict::PreferFirst,
            Verdict::NoDecision => Verdict::NoDecision,
        }
    }
}

pub fn outcome_scores(verdict: Verdict) -> (f64, f64) {
    verdict.outcome_scores()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub u64);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct CandidateGoal {
    pub id: GoalId,
    pub observation: Arc<Observation>,
    pub rating: f64,
    pub inserted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageInstruction(String);

impl LanguageInstruction {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Config("language instruction must be nonempty".into()));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageInstruction {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LanguageInstruction> for String {
    fn from(value: LanguageInstruction) -> Self {
        value.0
    }
}

impl fmt::Display for LanguageInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_scores_follow_win_loss_draw() {
        assert_eq!(outcome_scores(Verdict::PreferFirst), (1.0, 0.0));
        assert_eq!(outcome_scores(Verdict::NoDecision), (0.5, 0.5));
        assert_eq!(outcome_scores(Verdict::PreferSecond), (0.0, 1.0));
        for v in [Verdict::PreferFirst, Verdict::PreferSecond, Verdict::NoDecision] {
            let (a, b) = v.outcome_scores();
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn verdict_code_round_trips() {
        for v in [Verdict::PreferFirst, Verdict::PreferSecond, Verdict::NoDecision] {
            assert_eq!(Verdict::from_code(v.code() as i64), Some(v));
        }
        assert_eq!(Verdict::from_code(2), None);
        assert_eq!(Verdict::NoDecision.code(), -1);
        assert_eq!(Verdict::PreferFirst.code(), 0);
        assert_eq!(Verdict::PreferSecond.code(), 1);
    }

    #[test]
    fn observation_rejects_bad_shapes_and_pixels() {
        assert!(Observation::image(vec![0.5; 12], [2, 2, 3], 0, 0).is_ok());
        assert!(Observation::image(vec![0.5; 11], [2, 2, 3], 0, 0).is_err());
        assert!(Observation::image(vec![1.5; 4], [2, 2, 1], 0, 0).is_err());
        assert!(Observation::state_vector(vec![f64::NAN], 0, 0).is_err());
    }

    #[test]
    fn instruction_must_be_nonempty() {
        assert!(LanguageInstruction::new("  ").is_err());
        assert_eq!(LanguageInstruction::new("is pole balanced upright").unwrap().as_str(), "is pole balanced upright");
    }
}
