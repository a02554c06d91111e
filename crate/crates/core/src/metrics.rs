//! Run records and summary statistics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of `metrics.jsonl`, written at the end of every training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub step: u64,
    pub episode: u64,
    pub episode_return: f64,
    pub eval_success_rate: Option<f64>,
    pub buffer_size: usize,
    pub top_goal_id: Option<u64>,
    pub top_goal_rating: Option<f64>,
    pub top_goal_true_potential: Option<f64>,
    pub queries_used: u64,
    pub encoder_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

/// One line of `targets.jsonl`, written at every reward update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub step: u64,
    pub goal_id: u64,
    pub rating: f64,
    pub true_potential: Option<f64>,
    pub relabeled: usize,
    pub evicted: usize,
}

/// Appends JSON lines to a file.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Final, average and max of a run's evaluation success rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessSummary {
    pub final_success: f64,
    pub average_success: f64,
    pub max_success: f64,
}

impl SuccessSummary {
    pub fn from_evaluations(rates: &[f64]) -> Option<Self> {
        let last = *rates.last()?;
        Some(Self {
            final_success: last,
            average_success: rates.iter().sum::<f64>() / rates.len() as f64,
            max_success: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn from_records(records: &[EpisodeRecord]) -> Option<Self> {
        let rates: Vec<f64> = records.iter().filter_map(|r| r.eval_success_rate).collect();
        Self::from_evaluations(&rates)
    }
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
