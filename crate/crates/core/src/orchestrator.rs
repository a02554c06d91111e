//! The training loop: episode collection, feedback sessions (discovery and
//! ranking), periodic target selection with reward relabeling, and one agent
//! and encoder update per environment step.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ReplayBuffer, Sac, Transition};
use crate::comparator::{Comparator, ComparatorQuery};
use crate::config::ExperimentConfig;
use crate::embedding::{latent_distance, make_snapshot, Encoder, EncoderSnapshot, Latent, VaeModel};
use crate::env::{EnvState, Environment, IMAGE_SHAPE};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, SuccessSummary, TargetRecord};
use crate::rating::GoalBuffer;
use crate::seeding::{rng_for, Rng as StreamRng, Stream};
use crate::types::{GoalId, LanguageInstruction, Observation, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingMode {
    Elo,
    /// Every preferred discovery candidate replaces the whole buffer.
    Greedy,
}

impl std::str::FromStr for RatingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elo" => Ok(Self::Elo),
            "greedy" => Ok(Self::Greedy),
            _ => Err(Error::Config(format!("unknown rating mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Environment steps between feedback sessions.
    #[serde(rename = "K")]
    pub feedback_every: u64,
    /// Queries per discovery round and per ranking round.
    #[serde(rename = "M")]
    pub queries_per_session: usize,
    /// Environment steps between target updates.
    #[serde(rename = "L")]
    pub reward_update_every: u64,
    pub total_steps: u64,
    pub bootstrap_count: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            feedback_every: 500,
            queries_per_session: 5,
            reward_update_every: 5000,
            total_steps: 100_000,
            bootstrap_count: 2,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feedback_every == 0 || self.reward_update_every == 0 || self.total_steps == 0 {
            return Err(Error::Config("schedule.K, schedule.L and schedule.total_steps must be positive".into()));
        }
        if self.feedback_every > self.reward_update_every {
            return Err(Error::Config(format!(
                "schedule.K ({}) must not exceed schedule.L ({})",
                self.feedback_every, self.reward_update_every
            )));
        }
        if self.queries_per_session == 0 || self.bootstrap_count == 0 {
            return Err(Error::Config("schedule.M and schedule.bootstrap_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    MinMaxOverReplay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardShapingConfig {
    /// Exponent applied to the normalized reward.
    pub power_exponent: f64,
    pub normalization: Normalization,
}

impl Default for RewardShapingConfig {
    fn default() -> Self {
        Self {
            power_exponent: 20.0,
            normalization: Normalization::MinMaxOverReplay,
        }
    }
}

impl RewardShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_exponent >= 1.0 && self.power_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "shaping.power_exponent must be at least 1, got {}",
                self.power_exponent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub every_steps: u64,
    pub episodes: usize,
    /// End the run early once an evaluation reaches this success rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every_steps: 5000,
            episodes: 20,
            stop_at_success: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.every_steps == 0 || self.episodes == 0 {
            return Err(Error::Config("evaluation.every_steps and evaluation.episodes must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized distance reward `((d_max - d) / (d_max - d_min))^power`,
/// clamped to [0, 1]; every distance maps to 1 when the bounds coincide.
pub fn shape_reward(distance: f64, d_min: f64, d_max: f64, power: f64) -> f64 {
    let span = d_max - d_min;
    let r = if span > 0.0 { ((d_max - distance) / span).clamp(0.0, 1.0) } else { 1.0 };
    r.powf(power)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabelStats {
    pub count: usize,
    pub d_min: f64,
    pub d_max: f64,
}

/// Rewrites every stored reward from the distance between the transition's
/// next observation and the target latent. `None` for an empty replay.
pub fn relabel_rewards(
    replay: &mut ReplayBuffer,
    snapshot: &EncoderSnapshot,
    target: &Latent,
    shaping: &RewardShapingConfig,
) -> Result<Option<RelabelStats>> {
    if replay.is_empty() {
        return Ok(None);
    }
    let observations: Vec<&Observation> = replay.as_slice().iter().map(|t| &*t.next_observation).collect();
    let distances = snapshot
        .encode_batch(&observations)?
        .iter()
        .map(|z| latent_distance(z, target))
        .collect::<Result<Vec<f64>>>()?;
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rewards: Vec<f64> = distances
        .iter()
        .map(|&d| shape_reward(d, d_min, d_max, shaping.power_exponent))
        .collect();
    replay.set_rewards(&rewards);
    Ok(Some(RelabelStats {
        count: rewards.len(),
        d_min,
        d_max,
    }))
}

/// Observations of random-policy rollouts, including each reset frame.
pub fn random_rollout<R: Rng>(env: &Environment, min_count: usize, rng: &mut R) -> Result<Vec<Arc<Observation>>> {
    let mut out = Vec::new();
    let mut episode = 0;
    while out.len() < min_count {
        let (mut state, obs) = env.reset(rng, episode)?;
        out.push(Arc::new(obs));
        loop {
            let action: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let (next, obs, done) = env.step(&state, &action, episode)?;
            out.push(Arc::new(obs));
            state = next;
            if done {
                break;
            }
        }
        episode += 1;
    }
    Ok(out)
}

/// Seeds an empty goal buffer with `count` random-policy observations.
pub fn bootstrap_buffer<R: Rng>(env: &Environment, buffer: &mut GoalBuffer, count: usize, rng: &mut R) -> Result<()> {
    if !buffer.is_empty() {
        return Err(Error::Config("bootstrap needs an empty goal buffer".into()));
    }
    let pool = random_rollout(env, count, rng)?;
    for i in sample(rng, pool.len(), count) {
        buffer.insert_candidate(pool[i].clone(), 0);
    }
    Ok(())
}

/// Hands out consecutive query ids.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueryCounter(pub u64);

impl QueryCounter {
    fn next(&mut self) -> u64 {
        self.0 += 1;
        self.0 - 1
    }
}

/// Compares up to `m` observations of `episode` against the top goal and
/// admits those the comparator prefers. Ratings are left untouched.
#[allow(clippy::too_many_arguments)]
pub fn discovery_round<C: Comparator + ?Sized, R: Rng>(
    episode: &[Arc<Observation>],
    buffer: &mut GoalBuffer,
    comparator: &mut C,
    instruction: &LanguageInstruction,
    m: usize,
    mode: RatingMode,
    step: u64,
    ids: &mut QueryCounter,
    rng: &mut R,
) -> Result<usize> {
    let top = buffer.top_goal()?;
    let (top_id, top_obs) = (top.id, top.observation.clone());
    let picks: Vec<Arc<Observation>> = sample(rng, episode.len(), m.min(episode.len()))
        .into_iter()
        .map(|i| episode[i].clone())
        .collect();
    let queries = picks
        .iter()
        .map(|o| {
            Ok(ComparatorQuery::new(ids.next(), top_obs.clone(), o.clone(), instruction.clone())?
                .with_goals(Some(top_id), None))
        })
        .collect::<Result<Vec<_>>>()?;
    let verdicts = comparator.compare_batch(&queries)?;
    let mut inserted = 0;
    for (obs, verdict) in picks.into_iter().zip(verdicts) {
        if verdict == Verdict::PreferSecond {
            match mode {
                RatingMode::Elo => buffer.insert_candidate(obs, step),
                RatingMode::Greedy => buffer.replace_all(obs, step),
            };
            inserted += 1;
        }
    }
    Ok(inserted)
}

/// Compares `m` random buffer pairs and applies each verdict to the ratings.
pub fn ranking_round<C: Comparator + ?Sized, R: Rng>(
    buffer: &mut GoalBuffer,
    comparator: &mut C,
    instruction: &LanguageInstruction,
    m: usize,
    ids: &mut QueryCounter,
    rng: &mut R,
) -> Result<usize> {
    let pairs = buffer.sample_pairs(m, rng);
    if pairs.is_empty() {
        return Ok(0);
    }
    let observation = |id: GoalId| buffer.get(id).map(|g| g.observation.clone()).ok_or(Error::StaleGoalId(id));
    let queries = pairs
        .iter()
        .map(|&(a, b)| {
            Ok(ComparatorQuery::new(ids.next(), observation(a)?, observation(b)?, instruction.clone())?
                .with_goals(Some(a), Some(b)))
        })
        .collect::<Result<Vec<_>>>()?;
    let verdicts = comparator.compare_batch(&queries)?;
    for (&(a, b), v) in pairs.iter().zip(verdicts) {
        buffer.apply_verdict(a, b, v)?;
    }
    Ok(pairs.len())
}

/// Success rate of the deterministic policy over `episodes` rollouts run in
/// lockstep. An episode succeeds if the success condition holds at any step.
pub fn evaluate<R: Rng>(env: &Environment, agent: &Sac, episodes: usize, rng: &mut R) -> Result<f64> {
    let mut states: Vec<EnvState> = Vec::with_capacity(episodes);
    for e in 0..episodes {
        states.push(env.reset(rng, e as u64)?.0);
    }
    let mut solved: Vec<bool> = states.iter().map(|s| env.success(s)).collect();
    let fd = env.feature_dim();
    for _ in 0..env.config().episode_length {
        let feats: Vec<f64> = states.iter().flat_map(|s| env.features(s)).collect();
        let actions = agent.act_batch(Array2::from_shape_vec((episodes, fd), feats).expect("feature rows"), false, rng);
        for (e, state) in states.iter_mut().enumerate() {
            let (next, _, _) = env.step(state, &actions.row(e).to_vec(), e as u64)?;
            solved[e] |= env.success(&next);
            *state = next;
        }
    }
    Ok(solved.iter().filter(|&&s| s).count() as f64 / episodes as f64)
}

/// Receives run events as they happen.
pub trait RunObserver {
    fn on_episode(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    fn on_reward_update(&mut self, _record: &TargetRecord, _buffer: &GoalBuffer) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Collects everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryObserver {
    pub episodes: Vec<EpisodeRecord>,
    pub targets: Vec<TargetRecord>,
}

impl RunObserver for MemoryObserver {
    fn on_episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        self.episodes.push(record.clone());
        Ok(())
    }

    fn on_reward_update(&mut self, record: &TargetRecord, _buffer: &GoalBuffer) -> Result<()> {
        self.targets.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub episodes: u64,
    pub queries_used: u64,
    pub feedback_sessions: u64,
    pub skipped_ranking_rounds: u64,
    pub reward_updates: u64,
    pub evaluations: Vec<(u64, f64)>,
    pub success: Option<SuccessSummary>,
}

struct Target {
    id: GoalId,
    latent: Latent,
    /// Distance bounds from the last relabel, widened by later transitions.
    bounds: Option<(f64, f64)>,
}

#[derive(Default)]
struct EpisodeStats {
    reward: f64,
    critic: (f64, u32),
    actor: (f64, u32),
    encoder: (f64, u32),
}

fn mean(acc: (f64, u32)) -> Option<f64> {
    (acc.1 > 0).then(|| acc.0 / f64::from(acc.1))
}

pub struct Orchestrator {
    config: ExperimentConfig,
    instruction: LanguageInstruction,
    env: Environment,
    agent: Sac,
    encoder: Encoder,
    comparator: Box<dyn Comparator>,
    buffer: GoalBuffer,
    replay: ReplayBuffer,
    snapshot: EncoderSnapshot,
    target: Option<Target>,
    env_rng: StreamRng,
    agent_rng: StreamRng,
    feedback_rng: StreamRng,
    encoder_rng: StreamRng,
    step: u64,
    episode: u64,
    ids: QueryCounter,
    feedback_sessions: u64,
    skipped_ranking_rounds: u64,
    reward_updates: u64,
    latest_episode: Vec<Arc<Observation>>,
    current_episode: Vec<Arc<Observation>>,
    evaluations: Vec<(u64, f64)>,
}

impl Orchestrator {
    pub fn new(config: ExperimentConfig, comparator: Box<dyn Comparator>) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let env = Environment::new(config.env.clone())?;
        let mut agent_rng = rng_for(seed, Stream::Agent, 0);
        let mut encoder_rng = rng_for(seed, Stream::Encoder, 0);
        let agent = Sac::new(env.feature_dim(), env.action_dim(), &config.agent, &mut agent_rng)?;
        let encoder = if config.uses_vae() {
            Encoder::Vae(Box::new(VaeModel::new(IMAGE_SHAPE, &config.encoder, &mut encoder_rng)?))
        } else {
            Encoder::Identity
        };
        Ok(Self {
            instruction: config.instruction(),
            replay: ReplayBuffer::new(config.agent.replay_capacity),
            buffer: GoalBuffer::new(config.rating.clone()),
            snapshot: make_snapshot(&encoder, 0),
            target: None,
            env_rng: rng_for(seed, Stream::Environment, config.env.rng_seed),
            feedback_rng: rng_for(seed, Stream::Feedback, 0),
            agent_rng,
            encoder_rng,
            step: 0,
            episode: 0,
            ids: QueryCounter::default(),
            feedback_sessions: 0,
            skipped_ranking_rounds: 0,
            reward_updates: 0,
            latest_episode: Vec::new(),
            current_episode: Vec::new(),
            evaluations: Vec::new(),
            config,
            env,
            agent,
            encoder,
            comparator,
        })
    }

    pub fn agent(&self) -> &Sac {
        &self.agent
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn buffer(&self) -> &GoalBuffer {
        &self.buffer
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn queries_used(&self) -> u64 {
        self.ids.0
    }

    pub fn current_target(&self) -> Option<GoalId> {
        self.target.as_ref().map(|t| t.id)
    }

    fn true_potential(&self, obs: &Observation) -> Option<f64> {
        (!obs.source_state().is_empty()).then(|| self.env.potential_of_values(obs.source_state()))
    }

    /// Reward of a fresh transition under the current target and snapshot.
    fn reward_for(&mut self, obs: &Observation) -> Result<f64> {
        let power = self.config.shaping.power_exponent;
        let Some(target) = self.target.as_mut() else {
            return Ok(0.0);
        };
        let d = latent_distance(&self.snapshot.encode(obs)?, &target.latent)?;
        let (lo, hi) = target.bounds.map_or((d, d), |(lo, hi)| (lo.min(d), hi.max(d)));
        target.bounds = Some((lo, hi));
        Ok(shape_reward(d, lo, hi, power))
    }

    /// Evicts, refreshes the encoder snapshot, adopts the top goal as the
    /// target and relabels the replay buffer.
    pub fn reward_update(&mut self, observer: &mut dyn RunObserver) -> Result<GoalId> {
        let evicted = match self.config.rating_mode {
            RatingMode::Elo => self.buffer.evict_to_cap().len(),
            RatingMode::Greedy => 0,
        };
        self.snapshot = make_snapshot(&self.encoder, self.step);
        let top = self.buffer.top_goal()?;
        let (id, rating, obs) = (top.id, top.rating, top.observation.clone());
        let latent = self.snapshot.encode(&obs)?;
        let stats = relabel_rewards(&mut self.replay, &self.snapshot, &latent, &self.config.shaping)?;
        self.target = Some(Target {
            id,
            latent,
            bounds: stats.map(|s| (s.d_min, s.d_max)),
        });
        self.reward_updates += 1;
        let record = TargetRecord {
            step: self.step,
            goal_id: id.0,
            rating,
            true_potential: self.true_potential(&obs),
            relabeled: stats.map_or(0, |s| s.count),
            evicted,
        };
        log::debug!("step {}: target {} (rating {:.1})", self.step, id, rating);
        observer.on_reward_update(&record, &self.buffer)?;
        Ok(id)
    }

    fn feedback_session(&mut self) -> Result<()> {
        let m = self.config.schedule.queries_per_session;
        let episode = if self.latest_episode.is_empty() {
            &self.current_episode
        } else {
            &self.latest_episode
        };
        let inserted = discovery_round(
            episode,
            &mut self.buffer,
            &mut self.comparator,
            &self.instruction,
            m,
            self.config.rating_mode,
            self.step,
            &mut self.ids,
            &mut self.feedback_rng,
        )?;
        let compared = match self.config.rating_mode {
            RatingMode::Elo => ranking_round(
                &mut self.buffer,
                &mut self.comparator,
                &self.instruction,
                m,
                &mut self.ids,
                &mut self.feedback_rng,
            )?,
            RatingMode::Greedy => 0,
        };
        if compared == 0 {
            self.skipped_ranking_rounds += 1;
        }
        self.feedback_sessions += 1;
        log::debug!("step {}: feedback inserted {inserted}, compared {compared}", self.step);
        Ok(())
    }

    fn train_step(&mut self, stats: &mut EpisodeStats) -> Result<()> {
        if self.step >= self.config.agent.warmup_steps as u64 {
            if let Some(batch) = self.agent.sample_batch(&self.replay, &mut self.agent_rng) {
                let losses = self.agent.update(&batch, &mut self.agent_rng)?;
                stats.critic.0 += losses.critic;
                stats.critic.1 += 1;
                stats.actor.0 += losses.actor;
                stats.actor.1 += 1;
            }
        }
        if self.encoder.is_trainable() {
            let idx = self.replay.sample_indices(self.encoder.batch_size(), &mut self.encoder_rng);
            let batch: Vec<&Observation> = idx
                .iter()
                .map(|&i| &*self.replay.get(i).expect("sampled index").next_observation)
                .collect();
            if let Some(loss) = self.encoder.train_step(&batch, &mut self.encoder_rng)? {
                stats.encoder.0 += loss;
                stats.encoder.1 += 1;
            }
        }
        Ok(())
    }

    /// Runs the full schedule, reporting to `observer`.
    pub fn run(&mut self, observer: &mut dyn RunObserver) -> Result<RunSummary> {
        let schedule = self.config.schedule.clone();
        let eval_cfg = self.config.evaluation.clone();
        let mut bootstrap_rng = rng_for(self.config.seed, Stream::Bootstrap, 0);
        bootstrap_buffer(&self.env, &mut self.buffer, schedule.bootstrap_count, &mut bootstrap_rng)?;
        self.reward_update(observer)?;

        let mut next_eval = eval_cfg.every_steps;
        let mut stop = false;
        while self.step < schedule.total_steps && !stop {
            let (mut state, obs) = self.env.reset(&mut self.env_rng, self.episode)?;
            let mut obs = Arc::new(obs);
            self.current_episode = vec![obs.clone()];
            let mut stats = EpisodeStats::default();
            loop {
                let features = self.env.features(&state);
                let action = if self.step < self.config.agent.warmup_steps as u64 {
                    (0..self.env.action_dim()).map(|_| self.agent_rng.random_range(-1.0..=1.0)).collect()
                } else {
                    self.agent.act(&features, true, &mut self.agent_rng)
                };
                let (next, next_obs, done) = self.env.step(&state, &action, self.episode)?;
                let next_obs = Arc::new(next_obs);
                let reward = self.reward_for(&next_obs)?;
                stats.reward += reward;
                self.replay.store(Transition {
                    state: features,
                    action,
                    next_state: self.env.features(&next),
                    observation: obs,
                    next_observation: next_obs.clone(),
                    reward,
                    done: false,
                });
                self.current_episode.push(next_obs.clone());
                self.step += 1;
                self.train_step(&mut stats)?;
                if self.step % schedule.feedback_every == 0 {
                    self.feedback_session()?;
                }
                if self.step % schedule.reward_update_every == 0 {
                    self.reward_update(observer)?;
                }
                state = next;
                obs = next_obs;
                if done || self.step >= schedule.total_steps {
                    break;
                }
            }
            self.latest_episode = std::mem::take(&mut self.current_episode);

            let mut eval = None;
            if self.step >= next_eval || self.step >= schedule.total_steps {
                let mut rng = rng_for(self.config.seed, Stream::Evaluation, self.evaluations.len() as u64);
                let rate = evaluate(&self.env, &self.agent, eval_cfg.episodes, &mut rng)?;
                self.evaluations.push((self.step, rate));
                while next_eval <= self.step {
                    next_eval += eval_cfg.every_steps;
                }
                stop = eval_cfg.stop_at_success.is_some_and(|t| rate >= t);
                log::info!("step {}: eval success {rate:.2}", self.step);
                eval = Some(rate);
            }
            let top = self.buffer.top_goal().ok();
            let record = EpisodeRecord {
                step: self.step,
                episode: self.episode,
                episode_return: stats.reward,
                eval_success_rate: eval,
                buffer_size: self.buffer.len(),
                top_goal_id: top.map(|g| g.id.0),
                top_goal_rating: top.map(|g| g.rating),
                top_goal_true_potential: top.and_then(|g| self.true_potential(&g.observation)),
                queries_used: self.ids.0,
                encoder_loss: mean(stats.encoder),
                critic_loss: mean(stats.critic),
                actor_loss: mean(stats.actor),
            };
            observer.on_episode(&record)?;
            self.episode += 1;
        }
        let rates: Vec<f64> = self.evaluations.iter().map(|e| e.1).collect();
        Ok(RunSummary {
            steps: self.step,
            episodes: self.episode,
            queries_used: self.ids.0,
            feedback_sessions: self.feedback_sessions,
            skipped_ranking_rounds: self.skipped_ranking_rounds,
            reward_updates: self.reward_updates,
            success: SuccessSummary::from_evaluations(&rates),
            evaluations: self.evaluations.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparator::{Oracle, OracleConfig};
    use crate::env::EnvConfig;
    use crate::rating::RatingConfig;

    struct Always(Verdict);

    impl Comparator for Always {
        fn compare(&mut self, _: &ComparatorQuery) -> Result<Verdict> {
            Ok(self.0)
        }
    }

    fn scalar(v: f64) -> Arc<Observation> {
        Arc::new(Observation::state_vector(vec![v], 0, 0).unwrap())
    }

    fn instr() -> LanguageInstruction {
        LanguageInstruction::new("x").unwrap()
    }

    #[test]
    fn shaping_endpoints_and_midpoint() {
        assert_eq!(shape_reward(0.0, 0.0, 4.0, 20.0), 1.0);
        assert_eq!(shape_reward(4.0, 0.0, 4.0, 20.0), 0.0);
        assert!((shape_reward(2.0, 0.0, 4.0, 20.0) - 0.5f64.powi(20)).abs() < 1e-15);
        assert_eq!(shape_reward(3.0, 3.0, 3.0, 20.0), 1.0);
    }

    #[test]
    fn bootstrap_inserts_at_default_rating() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let mut b = GoalBuffer::new(RatingConfig::default());
        bootstrap_buffer(&env, &mut b, 2, &mut rng_for(1, Stream::Bootstrap, 0)).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.goals().iter().all(|g| g.rating == 1000.0));
        let mut again = GoalBuffer::new(RatingConfig::default());
        bootstrap_buffer(&env, &mut again, 2, &mut rng_for(1, Stream::Bootstrap, 0)).unwrap();
        for (x, y) in b.goals().iter().zip(again.goals()) {
            assert_eq!(x.observation, y.observation);
        }
        let mut one = GoalBuffer::new(RatingConfig::default());
        bootstrap_buffer(&env, &mut one, 1, &mut rng_for(1, Stream::Bootstrap, 0)).unwrap();
        assert!(one.top_goal().is_ok());
    }

    #[test]
    fn discovery_inserts_only_preferred_candidates() {
        let episode: Vec<_> = (0..10).map(|i| scalar(i as f64)).collect();
        let mut rng = rng_for(0, Stream::Feedback, 0);
        for (verdict, expected) in [(Verdict::PreferSecond, 5), (Verdict::NoDecision, 0), (Verdict::PreferFirst, 0)] {
            let mut b = GoalBuffer::new(RatingConfig::default());
            b.insert_candidate(scalar(100.0), 0);
            let mut ids = QueryCounter::default();
            let n = discovery_round(&episode, &mut b, &mut Always(verdict), &instr(), 5, RatingMode::Elo, 1, &mut ids, &mut rng)
                .unwrap();
            assert_eq!(n, expected);
            assert_eq!(b.len(), 1 + expected);
            assert_eq!(ids.0, 5);
            assert!(b.goals().iter().all(|g| g.rating == 1000.0));
        }
    }

    #[test]
    fn discovery_against_a_dominant_goal_inserts_nothing() {
        let episode: Vec<_> = (0..50).map(|i| scalar(-(i as f64))).collect();
        let cfg = OracleConfig {
            flip_probability: 0.0,
            ..Default::default()
        };
        let mut oracle = Oracle::new(cfg, 0, |o: &Observation| o.data()[0]).unwrap();
        let mut b = GoalBuffer::new(RatingConfig::default());
        b.insert_candidate(scalar(1.0), 0);
        let mut rng = rng_for(0, Stream::Feedback, 0);
        let n = discovery_round(&episode, &mut b, &mut oracle, &instr(), 5, RatingMode::Elo, 0, &mut QueryCounter::default(), &mut rng)
            .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn short_episode_is_sampled_whole() {
        let episode = vec![scalar(1.0), scalar(2.0)];
        let mut b = GoalBuffer::new(RatingConfig::default());
        b.insert_candidate(scalar(0.0), 0);
        let mut ids = QueryCounter::default();
        let mut rng = rng_for(0, Stream::Feedback, 0);
        let n = discovery_round(&episode, &mut b, &mut Always(Verdict::PreferSecond), &instr(), 5, RatingMode::Elo, 0, &mut ids, &mut rng)
            .unwrap();
        assert_eq!((n, ids.0), (2, 2));
    }

    #[test]
    fn greedy_discovery_keeps_only_the_latest_preferred() {
        let episode: Vec<_> = (0..10).map(|i| scalar(i as f64)).collect();
        let mut b = GoalBuffer::new(RatingConfig::default());
        b.insert_candidate(scalar(-1.0), 0);
        b.insert_candidate(scalar(-2.0), 0);
        let mut rng = rng_for(0, Stream::Feedback, 0);
        discovery_round(&episode, &mut b, &mut Always(Verdict::PreferSecond), &instr(), 3, RatingMode::Greedy, 7, &mut QueryCounter::default(), &mut rng)
            .unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn ranking_round_counts() {
        let mut b = GoalBuffer::new(RatingConfig::default());
        b.insert_candidate(scalar(0.0), 0);
        let mut ids = QueryCounter::default();
        let mut rng = rng_for(0, Stream::Feedback, 0);
        let mut c = Always(Verdict::PreferFirst);
        assert_eq!(ranking_round(&mut b, &mut c, &instr(), 5, &mut ids, &mut rng).unwrap(), 0);
        b.insert_candidate(scalar(1.0), 0);
        assert_eq!(ranking_round(&mut b, &mut c, &instr(), 5, &mut ids, &mut rng).unwrap(), 5);
        assert_eq!(ids.0, 5);
        assert!((b.total_rating() - 2000.0).abs() < 1e-9);
        assert!(b.goals().iter().any(|g| g.rating != 1000.0));
    }
}
