//! Experiment entry points behind the command-line tool.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::Sac;
use crate::checkpoint::Checkpoint;
use crate::comparator::{Comparator, Interactive, Oracle, Recording, Remote, Replay, ReplayLog};
use crate::config::{ComparatorKind, ExperimentConfig};
use crate::embedding::Encoder;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::metrics::{mean_std, EpisodeRecord, JsonlWriter, SuccessSummary, TargetRecord};
use crate::orchestrator::{evaluate, Orchestrator, RunObserver, RunSummary};
use crate::pnm::{observation_extension, write_observation};
use crate::rating::GoalBuffer;
use crate::seeding::{derive_seed, rng_for, Stream};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TARGETS_FILE: &str = "targets.jsonl";
pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const ENCODER_FILE: &str = "encoder.ckpt";

fn replay_header(config: &ExperimentConfig) -> String {
    format!("seed={} config_hash={}", config.seed, config.fingerprint())
}

/// Builds the comparator named by the config. Replay logs are checked
/// against the config they were recorded with.
pub fn build_comparator(config: &ExperimentConfig) -> Result<Box<dyn Comparator>> {
    let section = &config.comparator;
    Ok(match section.kind {
        ComparatorKind::Oracle => Box::new(Oracle::for_env(
            section.oracle.clone(),
            derive_seed(config.seed, Stream::Oracle, 0),
            Environment::new(config.env.clone())?,
        )?),
        ComparatorKind::Replay => {
            let path = section
                .replay_log
                .as_ref()
                .ok_or_else(|| Error::Config("replay comparator needs a log path".into()))?;
            let log = ReplayLog::load(path)?;
            let seed = config.seed.to_string();
            let hash = config.fingerprint();
            if log.header_value("seed").is_some_and(|s| s != seed) {
                return Err(Error::ReplayMismatch(format!(
                    "config mismatch: log was recorded with seed {}, config has {seed}",
                    log.header_value("seed").unwrap_or_default()
                )));
            }
            if log.header_value("config_hash").is_some_and(|h| h != hash) {
                return Err(Error::ReplayMismatch("config mismatch: log was recorded with a different configuration".into()));
            }
            Box::new(Replay::new(log))
        }
        ComparatorKind::Remote => Box::new(Remote::new(section.remote.clone())?),
        ComparatorKind::Interactive => Box::new(Interactive::new(
            BufReader::new(std::io::stdin()),
            std::io::stderr(),
            config.output_dir.join("queries"),
        )?),
    })
}

/// Writes metrics, targets and goal-buffer snapshots under a run directory.
pub struct RunDirectory {
    root: PathBuf,
    metrics: JsonlWriter,
    targets: JsonlWriter,
}

impl RunDirectory {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            metrics: JsonlWriter::create(&root.join(METRICS_FILE))?,
            targets: JsonlWriter::create(&root.join(TARGETS_FILE))?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

#[derive(Serialize)]
struct GoalLine {
    id: u64,
    rating: f64,
    inserted_at: u64,
    file: String,
}

impl RunObserver for RunDirectory {
    fn on_episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        self.metrics.write(record)?;
        self.metrics.flush()
    }

    fn on_reward_update(&mut self, record: &TargetRecord, buffer: &GoalBuffer) -> Result<()> {
        self.targets.write(record)?;
        self.targets.flush()?;
        let dir = self.root.join("snapshots").join(format!("step_{:08}", record.step));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut goals = JsonlWriter::create(&dir.join("goals.jsonl"))?;
        for g in buffer.goals() {
            let file = format!("goal_{}.{}", g.id, observation_extension(&g.observation));
            write_observation(&g.observation, &dir.join(&file))?;
            goals.write(&GoalLine {
                id: g.id.0,
                rating: g.rating,
                inserted_at: g.inserted_at,
                file,
            })?;
        }
        goals.flush()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Append every comparator verdict to this log.
    pub record: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: u64,
    pub episodes: u64,
    pub queries_used: u64,
    pub feedback_sessions: u64,
    pub reward_updates: u64,
    pub evaluations: Vec<(u64, f64)>,
    pub success: Option<SuccessSummary>,
}

impl From<&RunSummary> for RunReport {
    fn from(s: &RunSummary) -> Self {
        Self {
            steps: s.steps,
            episodes: s.episodes,
            queries_used: s.queries_used,
            feedback_sessions: s.feedback_sessions,
            reward_updates: s.reward_updates,
            evaluations: s.evaluations.clone(),
            success: s.success,
        }
    }
}

/// Runs one experiment and fills its output directory.
pub fn cmd_run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = out.join(CONFIG_FILE);
    fs::write(&resolved, config.to_toml()?).map_err(|e| Error::io(&resolved, e))?;

    let mut comparator = build_comparator(config)?;
    if let Some(path) = &options.record {
        comparator = Box::new(Recording::create(comparator, path, &replay_header(config))?);
    }
    let mut dir = RunDirectory::create(out)?;
    let mut orchestrator = Orchestrator::new(config.clone(), comparator)?;
    let summary = orchestrator.run(&mut dir)?;

    orchestrator.agent().checkpoint().save(&out.join(POLICY_FILE))?;
    if let Encoder::Vae(model) = orchestrator.encoder() {
        model.save(&out.join(ENCODER_FILE))?;
    }
    let report = RunReport::from(&summary);
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Re-runs with recorded verdicts. When the log sits next to a metrics
/// file, the new metrics must match it byte for byte.
pub fn cmd_replay(config: &ExperimentConfig, log: &Path) -> Result<RunReport> {
    let mut config = config.clone();
    config.comparator.kind = ComparatorKind::Replay;
    config.comparator.replay_log = Some(log.to_path_buf());
    let report = cmd_run(&config, &RunOptions::default())?;
    let recorded = log.parent().map(|p| p.join(METRICS_FILE)).filter(|p| p.exists());
    if let Some(recorded) = recorded {
        let fresh = config.output_dir.join(METRICS_FILE);
        if recorded != fresh {
            let a = fs::read_to_string(&recorded).map_err(|e| Error::io(&recorded, e))?;
            let b = fs::read_to_string(&fresh).map_err(|e| Error::io(&fresh, e))?;
            if let Some(n) = a.lines().zip(b.lines()).position(|(x, y)| x != y) {
                return Err(Error::ReplayMismatch(format!("metrics diverge from the recording at line {}", n + 1)));
            }
            if a.lines().count() != b.lines().count() {
                return Err(Error::ReplayMismatch("metrics length differs from the recording".into()));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationAxis {
    RatingMode,
    BufferCap,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rating-mode" | "rating_mode" => Ok(Self::RatingMode),
            "buffer-cap" | "buffer_cap" => Ok(Self::BufferCap),
            _ => Err(Error::Config(format!("unknown ablation axis '{s}'"))),
        }
    }
}

/// Applies one ablation value to a base config.
pub fn apply_axis(config: &mut ExperimentConfig, axis: AblationAxis, value: &str) -> Result<()> {
    match axis {
        AblationAxis::RatingMode => config.rating_mode = value.parse()?,
        AblationAxis::BufferCap => {
            config.rating.cap = value
                .parse()
                .map_err(|_| Error::Config(format!("buffer cap must be an integer, got '{value}'")))?;
        }
    }
    config.validate()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub runs: Vec<SuccessSummary>,
}

impl AblationRow {
    fn column(&self, f: impl Fn(&SuccessSummary) -> f64) -> (f64, f64) {
        mean_std(&self.runs.iter().map(f).collect::<Vec<_>>())
    }

    pub fn final_success(&self) -> (f64, f64) {
        self.column(|s| s.final_success)
    }

    pub fn average_success(&self) -> (f64, f64) {
        self.column(|s| s.average_success)
    }

    pub fn max_success(&self) -> (f64, f64) {
        self.column(|s| s.max_success)
    }
}

/// One run per value per seed; each run writes to `<output>/<value>/seed_<n>`.
pub fn cmd_ablate(config: &ExperimentConfig, axis: AblationAxis, values: &[String], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for value in values {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut c = config.clone();
            apply_axis(&mut c, axis, value)?;
            c.seed = seed;
            c.output_dir = config.output_dir.join(value).join(format!("seed_{seed}"));
            let report = cmd_run(&c, &RunOptions::default())?;
            runs.push(report.success.ok_or_else(|| Error::Config("run finished without an evaluation".into()))?);
        }
        rows.push(AblationRow {
            value: value.clone(),
            runs,
        });
    }
    Ok(rows)
}

pub fn format_ablation(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let name = match axis {
        AblationAxis::RatingMode => "rating mode",
        AblationAxis::BufferCap => "buffer cap",
    };
    let cell = |(m, s): (f64, f64)| format!("{m:.2} ± {s:.2}");
    let mut out = format!("{:<12} | {:<13} | {:<13} | {:<13}\n", name, "final", "average", "max");
    out.push_str(&format!("{}\n", "-".repeat(60)));
    for r in rows {
        out.push_str(&format!(
            "{:<12} | {:<13} | {:<13} | {:<13}\n",
            r.value,
            cell(r.final_success()),
            cell(r.average_success()),
            cell(r.max_success())
        ));
    }
    out
}

/// Success rate of a saved policy under the config's environment.
pub fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path, episodes: usize) -> Result<f64> {
    let env = Environment::new(config.env.clone())?;
    let mut rng = rng_for(config.seed, Stream::Evaluation, u64::MAX);
    let agent = Sac::from_checkpoint(&Checkpoint::load(checkpoint)?, &config.agent, &mut rng)?;
    if agent.state_dim() != env.feature_dim() || agent.action_dim() != env.action_dim() {
        return Err(Error::Checkpoint(format!(
            "policy expects {} inputs and {} actions, environment has {} and {}",
            agent.state_dim(),
            agent.action_dim(),
            env.feature_dim(),
            env.action_dim()
        )));
    }
    evaluate(&env, &agent, episodes, &mut rng)
}
