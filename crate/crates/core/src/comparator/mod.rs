//! Pairwise preference sources behind one query interface.

mod interactive;
mod oracle;
mod prompt;
mod remote;
mod replay;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{GoalId, LanguageInstruction, Observation, Verdict};

pub use interactive::Interactive;
pub use oracle::{Oracle, OracleConfig};
pub use prompt::{parse_response, render_prompt, PromptTemplate, DEFAULT_TEMPLATE, FORMATTING_INSTRUCTIONS};
pub use remote::{encode_png, Remote, RemoteConfig};
pub use replay::{LogEntry, Recording, ReplayLog, Replay};

/// One ordered comparison. Goal ids are present when the observation is a
/// buffer member and are only used for logging.
#[derive(Debug, Clone)]
pub struct ComparatorQuery {
    pub query_id: u64,
    pub first: Arc<Observation>,
    pub second: Arc<Observation>,
    pub first_goal: Option<GoalId>,
    pub second_goal: Option<GoalId>,
    pub instruction: LanguageInstruction,
}

impl ComparatorQuery {
    pub fn new(
        query_id: u64,
        first: Arc<Observation>,
        second: Arc<Observation>,
        instruction: LanguageInstruction,
    ) -> Result<Self> {
        if !first.same_layout(&second) {
            return Err(Error::InvalidObservation(format!(
                "query {query_id} compares {:?}{:?} with {:?}{:?}",
                first.kind(),
                first.shape(),
                second.kind(),
                second.shape()
            )));
        }
        Ok(Self {
            query_id,
            first,
            second,
            first_goal: None,
            second_goal: None,
            instruction,
        })
    }

    pub fn with_goals(mut self, first: Option<GoalId>, second: Option<GoalId>) -> Self {
        self.first_goal = first;
        self.second_goal = second;
        self
    }
}

pub trait Comparator {
    /// Errors are reserved for hard failures (an exhausted replay log);
    /// soft failures surface as `Verdict::NoDecision`.
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict>;

    /// Verdicts in the order of `queries`.
    fn compare_batch(&mut self, queries: &[ComparatorQuery]) -> Result<Vec<Verdict>> {
        queries.iter().map(|q| self.compare(q)).collect()
    }
}

impl<C: Comparator + ?Sized> Comparator for Box<C> {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        (**self).compare(query)
    }

    fn compare_batch(&mut self, queries: &[ComparatorQuery]) -> Result<Vec<Verdict>> {
        (**self).compare_batch(queries)
    }
}
