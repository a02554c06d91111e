//! Experiment configuration: TOML parsing with strict key checking.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::AgentConfig;
use crate::comparator::{OracleConfig, RemoteConfig};
use crate::embedding::EncoderConfig;
use crate::env::{EnvConfig, EnvName, ObservationMode};
use crate::error::{Error, Result};
use crate::orchestrator::{EvalConfig, RatingMode, RewardShapingConfig, ScheduleConfig};
use crate::rating::RatingConfig;
use crate::types::LanguageInstruction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparatorKind {
    Oracle,
    Replay,
    Remote,
    Interactive,
}

impl std::str::FromStr for ComparatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "replay" => Ok(Self::Replay),
            "remote" => Ok(Self::Remote),
            "interactive" => Ok(Self::Interactive),
            _ => Err(Error::Config(format!("unknown comparator '{s}'"))),
        }
    }
}

/// Which embedding produces reward distances. `auto` picks the identity for
/// vector observations and the VAE for images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Auto,
    Identity,
    Vae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparatorSection {
    pub kind: ComparatorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<PathBuf>,
    pub oracle: OracleConfig,
    pub remote: RemoteConfig,
}

impl Default for ComparatorSection {
    fn default() -> Self {
        Self {
            kind: ComparatorKind::Oracle,
            replay_log: None,
            oracle: OracleConfig::default(),
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub rating_mode: RatingMode,
    pub embedding: EmbeddingKind,
    /// Task-specific default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<LanguageInstruction>,
    pub env: EnvConfig,
    pub schedule: ScheduleConfig,
    pub rating: RatingConfig,
    pub shaping: RewardShapingConfig,
    pub agent: AgentConfig,
    pub encoder: EncoderConfig,
    pub evaluation: EvalConfig,
    pub comparator: ComparatorSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            rating_mode: RatingMode::Elo,
            embedding: EmbeddingKind::Auto,
            instruction: None,
            env: EnvConfig::default(),
            schedule: ScheduleConfig::default(),
            rating: RatingConfig::default(),
            shaping: RewardShapingConfig::default(),
            agent: AgentConfig::default(),
            encoder: EncoderConfig::default(),
            evaluation: EvalConfig::default(),
            comparator: ComparatorSection::default(),
        }
    }
}

pub fn default_instruction(env: EnvName) -> LanguageInstruction {
    let text = match env {
        EnvName::PointMass2D => "of the white dot is to sit inside the ring",
        EnvName::MountainCarContinuous => "is car at the top of the right hill, past the flag",
    };
    LanguageInstruction::new(text).expect("nonempty")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.rating.validate()?;
        self.shaping.validate()?;
        self.agent.validate()?;
        self.encoder.validate()?;
        self.evaluation.validate()?;
        crate::env::Environment::new(self.env.clone())?;
        match self.comparator.kind {
            ComparatorKind::Oracle => self.comparator.oracle.validate()?,
            ComparatorKind::Remote => {
                self.comparator.remote.validate()?;
                if self.env.observation_mode != ObservationMode::Image64 {
                    return Err(Error::Config("the remote comparator needs env.observation_mode = \"Image64\"".into()));
                }
            }
            ComparatorKind::Replay if self.comparator.replay_log.is_none() => {
                return Err(Error::Config("comparator.kind = \"replay\" needs comparator.replay_log".into()));
            }
            _ => {}
        }
        if self.embedding == EmbeddingKind::Vae && self.env.observation_mode != ObservationMode::Image64 {
            return Err(Error::Config("the VAE embedding needs image observations".into()));
        }
        Ok(())
    }

    pub fn instruction(&self) -> LanguageInstruction {
        self.instruction.clone().unwrap_or_else(|| default_instruction(self.env.env_name))
    }

    pub fn uses_vae(&self) -> bool {
        match self.embedding {
            EmbeddingKind::Vae => true,
            EmbeddingKind::Identity => false,
            EmbeddingKind::Auto => self.env.observation_mode == ObservationMode::Image64,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Fingerprint of everything that shapes a run except the comparator
    /// source and output location, used to pair replay logs with configs.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.comparator = ComparatorSection::default();
        let text = c.to_toml().unwrap_or_default();
        // FNV-1a
        let hash = text
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
        format!("{hash:016x}")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| type_error(text, &e))?;
    let lines = key_lines(text);
    check_keys(&schema(), &toml_to_json(&table), "", &lines)?;
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| type_error(text, &e))?;
    config.validate()?;
    Ok(config)
}

fn type_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| line_of(text, s.start));
    let msg = e.message().trim().to_string();
    match line {
        Some(l) => Error::Config(format!("line {l}: {msg}")),
        None => Error::Config(msg),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Every accepted key path, taken from a config with all optional fields set.
fn schema() -> Value {
    let mut c = ExperimentConfig::default();
    c.instruction = Some(default_instruction(EnvName::PointMass2D));
    c.env.goal_position = Some(vec![0.0]);
    c.agent.target_entropy = Some(0.0);
    c.comparator.replay_log = Some(PathBuf::new());
    c.comparator.oracle.rng_seed = Some(0);
    c.comparator.remote.prompt_template_path = Some(PathBuf::new());
    serde_json::to_value(c).expect("config serializes")
}

fn toml_to_json(table: &toml::Table) -> Value {
    serde_json::to_value(table).unwrap_or(Value::Null)
}

fn check_keys(schema: &Value, given: &Value, prefix: &str, lines: &BTreeMap<String, usize>) -> Result<()> {
    let (Value::Object(schema), Value::Object(given)) = (schema, given) else {
        return Ok(());
    };
    for (key, value) in given {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match schema.get(key) {
            Some(sub) => check_keys(sub, value, &path, lines)?,
            None => {
                let (key, line) = first_leaf(&path, lines);
                return Err(Error::UnknownConfigKey { key, line });
            }
        }
    }
    Ok(())
}

/// The earliest-defined key at or below `path`, so an unknown table is
/// reported by the full name of its first entry.
fn first_leaf(path: &str, lines: &BTreeMap<String, usize>) -> (String, usize) {
    let nested = format!("{path}.");
    lines
        .iter()
        .filter(|(k, _)| k.as_str() == path || k.starts_with(&nested))
        .filter(|(k, _)| !lines.keys().any(|other| other.starts_with(&format!("{k}."))))
        .min_by_key(|(_, &l)| l)
        .map(|(k, &l)| (k.clone(), l))
        .unwrap_or((path.to_string(), 0))
}

/// Line number of each dotted key path as written in the file.
fn key_lines(text: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    let mut table = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.trim_start_matches('[');
            if let Some(end) = header.find(']') {
                table = split_key(&header[..end]).join(".");
                out.entry(table.clone()).or_insert(n + 1);
            }
            continue;
        }
        if let Some(eq) = line.find('=') {
            let parts = split_key(&line[..eq]);
            let mut path = table.clone();
            for part in parts {
                if !path.is_empty() {
                    path.push('.');
                }
                path.push_str(&part);
                out.entry(path.clone()).or_insert(n + 1);
            }
        }
    }
    out
}

fn split_key(key: &str) -> Vec<String> {
    key.split('.')
        .map(|p| p.trim().trim_matches('"').trim_matches('\'').to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config_str("seed = 7\n[env]\nenv_name = \"MountainCarContinuous\"\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.env.env_name, EnvName::MountainCarContinuous);
        assert_eq!(c.schedule, ScheduleConfig::default());
        assert_eq!(c.rating, RatingConfig::default());
        assert_eq!(c.agent, AgentConfig::default());
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = parse_config_str("seed = 1\n\n[ratting]\nC = 400\n").unwrap_err();
        assert_eq!(err.to_string(), "unknown key 'ratting.C' at line 4");
        let err = parse_config_str("seed = 1\nratting.C = 400\n").unwrap_err();
        assert_eq!(err.to_string(), "unknown key 'ratting.C' at line 2");
        let err = parse_config_str("[rating]\nC = 400\nTT = 3\n").unwrap_err();
        assert_eq!(err.to_string(), "unknown key 'rating.TT' at line 3");
    }

    #[test]
    fn type_errors_name_the_line() {
        let err = parse_config_str("seed = 1\n[rating]\nC = \"big\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.seed = 99;
        c.instruction = Some(LanguageInstruction::new("of the dot is to be inside the ring").unwrap());
        c.env.goal_position = Some(vec![-3.0, 2.0]);
        c.rating.cap = 3;
        c.agent.target_entropy = Some(-1.5);
        c.comparator.oracle.rng_seed = Some(4);
        let text = c.to_toml().unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), c);
        assert_eq!(parse_config_str(&ExperimentConfig::default().to_toml().unwrap()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn fingerprint_ignores_comparator_and_output() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.comparator.kind = ComparatorKind::Replay;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(parse_config_str("[comparator]\nkind = \"remote\"\n").is_err());
        assert!(parse_config_str("[comparator]\nkind = \"replay\"\n").is_err());
        assert!(parse_config_str("[schedule]\nK = 600\nL = 500\n").is_err());
    }
}
