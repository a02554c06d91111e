use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::adam::AdamConfig;
use crate::nn::{all_finite, polyak_update, Adam, Mlp, MlpCache};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub alpha_learning_rate: f64,
    /// Polyak coefficient for the target critics.
    pub target_smoothing: f64,
    /// Defaults to minus the action dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
    pub initial_temperature: f64,
    /// When false the entropy coefficient stays at `initial_temperature`.
    pub learn_temperature: bool,
    pub hidden: Vec<usize>,
    /// Uniform-random actions and no updates before this many steps.
    pub warmup_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            replay_capacity: 1_000_000,
            batch_size: 256,
            actor_learning_rate: 3e-4,
            critic_learning_rate: 3e-4,
            alpha_learning_rate: 1e-4,
            target_smoothing: 0.005,
            target_entropy: None,
            initial_temperature: 0.1,
            learn_temperature: true,
            hidden: vec![256, 256],
            warmup_steps: 10_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("agent.discount must be in [0, 1), got {}", self.discount)));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 {
            return Err(Error::Config("agent.replay_capacity and agent.batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.target_smoothing) {
            return Err(Error::Config("agent.target_smoothing must be in [0, 1]".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("agent.hidden must list positive widths".into()));
        }
        if !(self.initial_temperature >= 0.0) {
            return Err(Error::Config("agent.initial_temperature must be nonnegative".into()));
        }
        if self.learn_temperature && self.initial_temperature == 0.0 {
            return Err(Error::Config("a learned temperature must start positive".into()));
        }
        Ok(())
    }
}

/// Mini-batch in matrix form.
#[derive(Debug, Clone)]
pub struct SacBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl SacBatch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let n = items.len();
        let sd = items[0].state.len();
        let ad = items[0].action.len();
        Self {
            states: Array2::from_shape_fn((n, sd), |(i, j)| items[i].state[j]),
            actions: Array2::from_shape_fn((n, ad), |(i, j)| items[i].action[j]),
            rewards: Array1::from_shape_fn(n, |i| items[i].reward),
            next_states: Array2::from_shape_fn((n, sd), |(i, j)| items[i].next_state[j]),
            dones: Array1::from_shape_fn(n, |i| if items[i].done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    pub temperature: f64,
}

/// Reparameterized tanh-Gaussian sample with everything backward needs.
struct PolicySample {
    cache: MlpCache,
    actions: Array2<f64>,
    log_prob: Array1<f64>,
    std: Array2<f64>,
    raw_log_std: Array2<f64>,
    noise: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Sac {
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    critic: Mlp,
    pub actor_params: Vec<f64>,
    pub critic_params: [Vec<f64>; 2],
    pub target_params: [Vec<f64>; 2],
    pub log_temperature: f64,
    actor_opt: Adam,
    critic_opt: [Adam; 2],
    temperature_opt: Adam,
    updates: u64,
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(actor_sizes);
        let critic = Mlp::new(critic_sizes);
        let actor_params = actor.init(rng);
        let critic_params = [critic.init(rng), critic.init(rng)];
        let target_params = critic_params.clone();
        let critic_opt = [
            Adam::new(AdamConfig::with_lr(config.critic_learning_rate), critic.num_params()),
            Adam::new(AdamConfig::with_lr(config.critic_learning_rate), critic.num_params()),
        ];
        Ok(Self {
            state_dim,
            action_dim,
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_learning_rate), actor.num_params()),
            critic_opt,
            temperature_opt: Adam::new(AdamConfig::with_lr(config.alpha_learning_rate), 1),
            log_temperature: config.initial_temperature.ln(),
            actor,
            critic,
            actor_params,
            critic_params,
            target_params,
            config: config.clone(),
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    pub fn actor_net(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic_net(&self) -> &Mlp {
        &self.critic
    }

    fn policy_sample(&self, actor_params: &[f64], states: Array2<f64>, noise: Array2<f64>) -> PolicySample {
        let a = self.action_dim;
        let cache = self.actor.forward(actor_params, states);
        let mean = cache.output.slice(s![.., ..a]).to_owned();
        let raw_log_std = cache.output.slice(s![.., a..]).to_owned();
        let log_std = raw_log_std.mapv(squash_log_std);
        let std = log_std.mapv(f64::exp);
        let u = &mean + &(&std * &noise);
        let actions = u.mapv(f64::tanh);
        let mut log_prob = Array1::zeros(u.nrows());
        for r in 0..u.nrows() {
            let mut lp = 0.0;
            for k in 0..a {
                let uk = u[[r, k]];
                let log_det = 2.0 * (std::f64::consts::LN_2 - uk - softplus(-2.0 * uk));
                lp += -0.5 * noise[[r, k]] * noise[[r, k]] - log_std[[r, k]] - HALF_LN_2PI - log_det;
            }
            log_prob[r] = lp;
        }
        PolicySample {
            cache,
            actions,
            log_prob,
            std,
            raw_log_std,
            noise,
        }
    }

    fn critic_input(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[states.view(), actions.view()]).expect("matching batch sizes")
    }

    fn q_values(&self, params: &[f64], states: &Array2<f64>, actions: &Array2<f64>) -> Array1<f64> {
        self.critic
            .predict(params, Self::critic_input(states, actions))
            .index_axis_move(Axis(1), 0)
    }

    /// Policy action for one state. Deterministic mode returns tanh of the mean.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], stochastic: bool, rng: &mut R) -> Vec<f64> {
        let states = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("state row");
        self.act_batch(states, stochastic, rng).row(0).to_vec()
    }

    pub fn act_batch<R: Rng + ?Sized>(&self, states: Array2<f64>, stochastic: bool, rng: &mut R) -> Array2<f64> {
        let n = states.nrows();
        let noise = if stochastic {
            Array2::from_shape_simple_fn((n, self.action_dim), || rng.sample(StandardNormal))
        } else {
            Array2::zeros((n, self.action_dim))
        };
        if !stochastic {
            let out = self.actor.predict(&self.actor_params, states);
            return out.slice(s![.., ..self.action_dim]).mapv(f64::tanh);
        }
        self.policy_sample(&self.actor_params, states, noise).actions
    }

    /// Soft Bellman targets r + discount * (1 - done) * (min target Q - alpha * log pi).
    pub fn critic_targets(&self, batch: &SacBatch, next_noise: Array2<f64>) -> Array1<f64> {
        let sample = self.policy_sample(&self.actor_params, batch.next_states.clone(), next_noise);
        let q1 = self.q_values(&self.target_params[0], &batch.next_states, &sample.actions);
        let q2 = self.q_values(&self.target_params[1], &batch.next_states, &sample.actions);
        let alpha = self.temperature();
        let soft = ndarray::Zip::from(&q1)
            .and(&q2)
            .and(&sample.log_prob)
            .map_collect(|&a, &b, &lp| a.min(b) - alpha * lp);
        &batch.rewards + &(soft * (1.0 - &batch.dones) * self.config.discount)
    }

    /// Mean squared Bellman error summed over both critics, with gradients.
    pub fn critic_loss(&self, params: &[Vec<f64>; 2], batch: &SacBatch, targets: &Array1<f64>) -> (f64, [Vec<f64>; 2]) {
        let n = batch.len() as f64;
        let input = Self::critic_input(&batch.states, &batch.actions);
        let mut loss = 0.0;
        let mut grads = [vec![0.0; self.critic.num_params()], vec![0.0; self.critic.num_params()]];
        for i in 0..2 {
            let cache = self.critic.forward(&params[i], input.clone());
            let q = cache.output.column(0).to_owned();
            let err = &q - targets;
            loss += err.mapv(|e| e * e).sum() / n;
            let d = (err * (2.0 / n)).insert_axis(Axis(1));
            self.critic.backward(&params[i], &cache, d, &mut grads[i]);
        }
        (loss, grads)
    }

    /// Actor objective mean(alpha * log pi - min Q) and its gradient, plus
    /// the per-sample log-probabilities.
    pub fn actor_loss(&self, actor_params: &[f64], states: &Array2<f64>, noise: Array2<f64>) -> (f64, Vec<f64>, Array1<f64>) {
        let n = states.nrows();
        let scale = 1.0 / n as f64;
        let a = self.action_dim;
        let alpha = self.temperature();
        let sample = self.policy_sample(actor_params, states.clone(), noise);
        let input = Self::critic_input(states, &sample.actions);
        let c1 = self.critic.forward(&self.critic_params[0], input.clone());
        let c2 = self.critic.forward(&self.critic_params[1], input);
        let mut loss = 0.0;
        let mut d1 = Array2::zeros((n, 1));
        let mut d2 = Array2::zeros((n, 1));
        for r in 0..n {
            let (q1, q2) = (c1.output[[r, 0]], c2.output[[r, 0]]);
            loss += (alpha * sample.log_prob[r] - q1.min(q2)) * scale;
            if q1 <= q2 {
                d1[[r, 0]] = -scale;
            } else {
                d2[[r, 0]] = -scale;
            }
        }
        let mut scratch = vec![0.0; self.critic.num_params()];
        let g1 = self.critic.backward(&self.critic_params[0], &c1, d1, &mut scratch);
        let g2 = self.critic.backward(&self.critic_params[1], &c2, d2, &mut scratch);
        let d_action = (g1 + g2).slice(s![.., self.state_dim..]).to_owned();

        let mut d_out = Array2::zeros((n, 2 * a));
        for r in 0..n {
            for k in 0..a {
                let act = sample.actions[[r, k]];
                // dL/du through both tanh(u) into the critic and the log-det term
                let du = d_action[[r, k]] * (1.0 - act * act) + alpha * scale * 2.0 * act;
                let dlog_std = -alpha * scale + du * sample.std[[r, k]] * sample.noise[[r, k]];
                d_out[[r, k]] = du;
                d_out[[r, a + k]] = dlog_std * squash_log_std_grad(sample.raw_log_std[[r, k]]);
            }
        }
        let mut grads = vec![0.0; self.actor.num_params()];
        self.actor.backward(actor_params, &sample.cache, d_out, &mut grads);
        (loss, grads, sample.log_prob)
    }

    /// Temperature objective mean(alpha * (-log pi - target entropy)) and its
    /// derivative with respect to log alpha.
    pub fn temperature_loss(&self, log_temperature: f64, log_prob: &Array1<f64>) -> (f64, f64) {
        let alpha = log_temperature.exp();
        let h = self.target_entropy();
        let mean = log_prob.iter().map(|lp| -lp - h).sum::<f64>() / log_prob.len() as f64;
        (alpha * mean, alpha * mean)
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, replay: &ReplayBuffer, rng: &mut R) -> Option<SacBatch> {
        let idx = replay.sample_indices(self.config.batch_size, rng);
        if idx.is_empty() {
            return None;
        }
        let items: Vec<&Transition> = idx.iter().map(|&i| replay.get(i).expect("sampled index")).collect();
        Some(SacBatch::from_transitions(&items))
    }

    /// One gradient step for the critics, the actor and the temperature,
    /// then Polyak averaging of the target critics.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<Losses> {
        if batch.is_empty() {
            return Err(Error::Config("SAC update needs a nonempty batch".into()));
        }
        let n = batch.len();
        let next_noise = Array2::from_shape_simple_fn((n, self.action_dim), || rng.sample(StandardNormal));
        let targets = self.critic_targets(batch, next_noise);
        let (critic_loss, critic_grads) = self.critic_loss(&self.critic_params, batch, &targets);
        self.check("critic", critic_loss, &critic_grads[0])?;
        for i in 0..2 {
            self.critic_opt[i].step(&mut self.critic_params[i], &critic_grads[i]);
        }

        let noise = Array2::from_shape_simple_fn((n, self.action_dim), || rng.sample(StandardNormal));
        let (actor_loss, actor_grads, log_prob) = self.actor_loss(&self.actor_params, &batch.states, noise);
        self.check("actor", actor_loss, &actor_grads)?;
        self.actor_opt.step(&mut self.actor_params, &actor_grads);

        let (alpha_loss, alpha_grad) = self.temperature_loss(self.log_temperature, &log_prob);
        if self.config.learn_temperature {
            let mut p = [self.log_temperature];
            self.temperature_opt.step(&mut p, &[alpha_grad]);
            self.log_temperature = p[0];
        }

        for i in 0..2 {
            polyak_update(&mut self.target_params[i], &self.critic_params[i], self.config.target_smoothing);
        }
        self.updates += 1;
        Ok(Losses {
            critic: critic_loss,
            actor: actor_loss,
            alpha: alpha_loss,
            temperature: self.temperature(),
        })
    }

    fn check(&self, component: &'static str, loss: f64, grads: &[f64]) -> Result<()> {
        if loss.is_finite() && all_finite(grads) {
            Ok(())
        } else {
            Err(Error::NonFiniteLoss {
                component,
                detail: format!("loss {loss} after {} updates, temperature {}", self.updates, self.temperature()),
            })
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.push_meta("kind", "policy");
        c.push_meta("state_dim", self.state_dim);
        c.push_meta("action_dim", self.action_dim);
        c.push_meta(
            "hidden",
            self.config.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        for (name, shape, range) in self.actor.tensor_layout() {
            c.push_tensor(&format!("actor.{name}"), &shape, &self.actor_params[range]);
        }
        for (i, (params, target)) in self.critic_params.iter().zip(&self.target_params).enumerate() {
            for (name, shape, range) in self.critic.tensor_layout() {
                c.push_tensor(&format!("critic{i}.{name}"), &shape, &params[range.clone()]);
                c.push_tensor(&format!("target{i}.{name}"), &shape, &target[range]);
            }
        }
        c.push_tensor("log_temperature", &[1], &[self.log_temperature]);
        c
    }

    /// Rebuilds an agent from a policy checkpoint; optimizer state starts fresh.
    pub fn from_checkpoint<R: Rng + ?Sized>(ckpt: &Checkpoint, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        let meta_usize = |key: &str| -> Result<usize> {
            ckpt.meta(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing or invalid meta '{key}'")))
        };
        if ckpt.meta("kind") != Some("policy") {
            return Err(Error::Checkpoint("not a policy checkpoint".into()));
        }
        let hidden = ckpt
            .meta("hidden")
            .ok_or_else(|| Error::Checkpoint("missing meta 'hidden'".into()))?
            .split(',')
            .map(|h| h.parse::<usize>().map_err(|_| Error::Checkpoint(format!("bad hidden width '{h}'"))))
            .collect::<Result<Vec<_>>>()?;
        let config = AgentConfig {
            hidden,
            ..config.clone()
        };
        let mut agent = Sac::new(meta_usize("state_dim")?, meta_usize("action_dim")?, &config, rng)?;
        let load = |prefix: &str, net: &Mlp, dst: &mut Vec<f64>| -> Result<()> {
            for (name, shape, range) in net.tensor_layout() {
                let t = ckpt.tensor(&format!("{prefix}.{name}"))?;
                if t.shape != shape {
                    return Err(Error::Checkpoint(format!("tensor {prefix}.{name} has shape {:?}", t.shape)));
                }
                dst[range].copy_from_slice(&t.values);
            }
            Ok(())
        };
        let actor = agent.actor.clone();
        let critic = agent.critic.clone();
        load("actor", &actor, &mut agent.actor_params)?;
        for i in 0..2 {
            load(&format!("critic{i}"), &critic, &mut agent.critic_params[i])?;
            load(&format!("target{i}"), &critic, &mut agent.target_params[i])?;
        }
        agent.log_temperature = ckpt.tensor("log_temperature")?.values[0];
        Ok(agent)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn squash_log_std_grad(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mini(alpha: f64) -> (Sac, SacBatch) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = AgentConfig {
            hidden: vec![4, 4],
            batch_size: 2,
            initial_temperature: alpha.max(1e-3),
            ..Default::default()
        };
        let agent = Sac::new(3, 2, &cfg, &mut rng).unwrap();
        let batch = SacBatch {
            states: Array2::from_shape_fn((2, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin()),
            actions: Array2::from_shape_fn((2, 2), |(i, j)| ((i + 2 * j) as f64 * 0.9).cos() * 0.8),
            rewards: Array1::from(vec![0.3, 0.9]),
            next_states: Array2::from_shape_fn((2, 3), |(i, j)| ((i * 3 + j) as f64 * 0.4).cos()),
            dones: Array1::from(vec![0.0, 1.0]),
        };
        (agent, batch)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn actions_are_bounded_and_deterministic_mode_repeats() {
        let (agent, _) = mini(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(agent.act(&s, true, &mut rng).iter().all(|a| a.abs() < 1.0));
        }
        let s = [0.2, -0.4, 0.1];
        assert_eq!(agent.act(&s, false, &mut rng), agent.act(&s, false, &mut rng));
    }

    #[test]
    fn stochastic_actions_vary() {
        let (agent, _) = mini(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<Vec<f64>> = (0..1000).map(|_| agent.act(&[0.1, 0.2, 0.3], true, &mut rng)).collect();
        for k in 0..2 {
            let mean = samples.iter().map(|a| a[k]).sum::<f64>() / 1000.0;
            let var = samples.iter().map(|a| (a[k] - mean).powi(2)).sum::<f64>() / 999.0;
            assert!(var > 1e-4);
        }
    }

    #[test]
    fn terminal_target_is_reward() {
        let (mut agent, mut batch) = mini(0.0);
        agent.log_temperature = f64::NEG_INFINITY;
        batch.dones = Array1::from(vec![1.0, 1.0]);
        let targets = agent.critic_targets(&batch, Array2::zeros((2, 2)));
        assert_eq!(targets, batch.rewards);
    }

    #[test]
    fn bootstrap_target_matches_independent_forward_pass() {
        let (mut agent, batch) = mini(0.0);
        agent.log_temperature = f64::NEG_INFINITY;
        let targets = agent.critic_targets(&batch, Array2::zeros((2, 2)));
        // oracle: evaluate the policy mean and both target critics by hand
        let relu = |v: f64| v.max(0.0);
        let dense = |p: &[f64], off: usize, x: &[f64], n_out: usize| -> (Vec<f64>, usize) {
            let n_in = x.len();
            let mut y = vec![0.0; n_out];
            for o in 0..n_out {
                y[o] = p[off + n_in * n_out + o];
                for i in 0..n_in {
                    y[o] += x[i] * p[off + i * n_out + o];
                }
            }
            (y, off + n_in * n_out + n_out)
        };
        let net = |p: &[f64], x: &[f64], sizes: &[usize]| -> Vec<f64> {
            let mut h = x.to_vec();
            let mut off = 0;
            for (l, w) in sizes.windows(2).enumerate() {
                let (y, next) = dense(p, off, &h, w[1]);
                off = next;
                h = if l + 2 < sizes.len() { y.into_iter().map(relu).collect() } else { y };
            }
            h
        };
        for r in 0..2 {
            let s = batch.next_states.row(r).to_vec();
            let out = net(&agent.actor_params, &s, &[3, 4, 4, 4]);
            let a: Vec<f64> = out[..2].iter().map(|m| m.tanh()).collect();
            let x: Vec<f64> = s.iter().chain(&a).copied().collect();
            let q1 = net(&agent.target_params[0], &x, &[5, 4, 4, 1])[0];
            let q2 = net(&agent.target_params[1], &x, &[5, 4, 4, 1])[0];
            let expected = batch.rewards[r] + 0.99 * (1.0 - batch.dones[r]) * q1.min(q2);
            assert!((targets[r] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let (agent, batch) = mini(0.1);
        let targets = Array1::from(vec![0.5, -0.2]);
        let (_, grads) = agent.critic_loss(&agent.critic_params, &batch, &targets);
        let h = 1e-6;
        for c in 0..2 {
            for i in 0..agent.critic_params[c].len() {
                let mut p = agent.critic_params.clone();
                p[c][i] += h;
                let up = agent.critic_loss(&p, &batch, &targets).0;
                p[c][i] -= 2.0 * h;
                let down = agent.critic_loss(&p, &batch, &targets).0;
                let numeric = (up - down) / (2.0 * h);
                assert!(rel_err(numeric, grads[c][i]) <= 1e-3 || (numeric - grads[c][i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let (agent, batch) = mini(0.2);
        let noise = Array2::from_shape_vec((2, 2), vec![0.3, -0.8, 1.1, 0.05]).unwrap();
        let (_, grads, _) = agent.actor_loss(&agent.actor_params, &batch.states, noise.clone());
        let h = 1e-6;
        for i in 0..agent.actor_params.len() {
            let mut p = agent.actor_params.clone();
            p[i] += h;
            let up = agent.actor_loss(&p, &batch.states, noise.clone()).0;
            p[i] -= 2.0 * h;
            let down = agent.actor_loss(&p, &batch.states, noise.clone()).0;
            let numeric = (up - down) / (2.0 * h);
            assert!(
                rel_err(numeric, grads[i]) <= 1e-3 || (numeric - grads[i]).abs() < 1e-8,
                "param {i}: {numeric} vs {}",
                grads[i]
            );
        }
    }

    #[test]
    fn temperature_gradient_matches_finite_difference() {
        let (agent, _) = mini(0.1);
        let lp = Array1::from(vec![-1.5, 0.7, 0.2]);
        let (_, g) = agent.temperature_loss(-0.3, &lp);
        let h = 1e-6;
        let numeric = (agent.temperature_loss(-0.3 + h, &lp).0 - agent.temperature_loss(-0.3 - h, &lp).0) / (2.0 * h);
        assert!(rel_err(numeric, g) < 1e-6);
    }

    #[test]
    fn zero_smoothing_freezes_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AgentConfig {
            hidden: vec![4, 4],
            target_smoothing: 0.0,
            ..Default::default()
        };
        let mut agent = Sac::new(3, 2, &cfg, &mut rng).unwrap();
        let (_, batch) = mini(0.1);
        let before = agent.target_params.clone();
        let critics = agent.critic_params.clone();
        agent.update(&batch, &mut rng).unwrap();
        assert_eq!(agent.target_params, before);
        assert_ne!(agent.critic_params, critics);
    }

    #[test]
    fn checkpoint_restores_policy() {
        let (agent, _) = mini(0.1);
        let ckpt = Checkpoint::from_bytes(&agent.checkpoint().to_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let back = Sac::from_checkpoint(&ckpt, &AgentConfig::default(), &mut rng).unwrap();
        let s = [0.1, 0.2, -0.3];
        let a = agent.act(&s, false, &mut rng);
        let b = back.act(&s, false, &mut rng);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}
