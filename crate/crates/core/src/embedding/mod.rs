//! Observation embeddings for reward distances.
//!
//! Vector observations use the identity embedding. Image observations use
//! a small convolutional VAE whose posterior mean is the latent. Rewards are
//! always computed against an [`EncoderSnapshot`], a frozen copy of the
//! encoder taken when the reward target is refreshed.

mod vae;

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::adam::AdamConfig;
use crate::nn::Adam;
use crate::types::{Observation, ObservationKind};

pub use vae::{gaussian_kl, ElboTerms, VaeArch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub latent_dim: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Output channels of each stride-2 convolution; the decoder mirrors them.
    pub channels: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            beta: 0.1,
            learning_rate: 1e-4,
            batch_size: 128,
            channels: vec![8, 16, 32, 32],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 1 {
            return Err(Error::Config("encoder.latent_dim must be at least 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("encoder.beta must be nonnegative".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("encoder.learning_rate must be nonnegative".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("encoder.batch_size must be positive".into()));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config("encoder.channels must be nonempty and positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latent(pub Vec<f64>);

impl Latent {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn latent_distance(a: &Latent, b: &Latent) -> Result<f64> {
    if a.0.len() != b.0.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("latent of length {}", a.0.len()),
            actual: format!("length {}", b.0.len()),
        });
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Trainable VAE parameters with their optimizer state.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub arch: VaeArch,
    pub params: Vec<f64>,
    config: EncoderConfig,
    optimizer: Adam,
}

impl VaeModel {
    pub fn new<R: Rng + ?Sized>(input_shape: [usize; 3], config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let arch = VaeArch::new(input_shape, config.channels.clone(), config.latent_dim)?;
        let params = arch.init(rng);
        let optimizer = Adam::new(AdamConfig::with_lr(config.learning_rate), params.len());
        Ok(Self {
            arch,
            params,
            config: config.clone(),
            optimizer,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// One Adam step on the ELBO of `batch`; returns the pre-step loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &[&Observation], rng: &mut R) -> Result<f64> {
        let (terms, grads) = self.arch.elbo_loss(&self.params, batch, self.config.beta, rng)?;
        if !terms.loss.is_finite() || !crate::nn::all_finite(&grads) {
            return Err(Error::NonFiniteLoss {
                component: "encoder",
                detail: format!(
                    "loss {} (reconstruction {}, kl {}) after {} steps",
                    terms.loss,
                    terms.reconstruction,
                    terms.kl,
                    self.optimizer.steps_taken()
                ),
            });
        }
        self.optimizer.step(&mut self.params, &grads);
        Ok(terms.loss)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.push_meta("kind", "vae");
        c.push_meta("input", self.arch.input_shape().map(|d| d.to_string()).join(","));
        c.push_meta(
            "channels",
            self.arch.channels().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        c.push_meta("latent_dim", self.arch.latent_dim());
        for (name, shape, range) in self.arch.tensor_layout() {
            c.push_tensor(&name, &shape, &self.params[range]);
        }
        c
    }

    pub fn load_params(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.meta("kind") != Some("vae") {
            return Err(Error::Checkpoint("not a VAE checkpoint".into()));
        }
        for (name, shape, range) in self.arch.tensor_layout() {
            let t = ckpt.tensor(&name)?;
            if t.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            self.params[range].copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }
}

/// The embedding network ψ that the orchestrator keeps training.
#[derive(Debug, Clone)]
pub enum Encoder {
    Identity,
    Vae(Box<VaeModel>),
}

impl Encoder {
    pub fn is_trainable(&self) -> bool {
        matches!(self, Encoder::Vae(_))
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &[&Observation], rng: &mut R) -> Result<Option<f64>> {
        match self {
            Encoder::Identity => Ok(None),
            Encoder::Vae(model) => model.train_step(batch, rng).map(Some),
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            Encoder::Identity => 0,
            Encoder::Vae(model) => model.config.batch_size,
        }
    }
}

#[derive(Debug)]
enum Frozen {
    Identity,
    Vae { arch: VaeArch, params: Vec<f64> },
}

/// Immutable copy of the encoder at a given orchestrator step.
#[derive(Debug, Clone)]
pub struct EncoderSnapshot {
    frozen: Arc<Frozen>,
    pub snapshot_step: u64,
}

pub fn make_snapshot(encoder: &Encoder, step: u64) -> EncoderSnapshot {
    let frozen = match encoder {
        Encoder::Identity => Frozen::Identity,
        Encoder::Vae(model) => Frozen::Vae {
            arch: model.arch.clone(),
            params: model.params.clone(),
        },
    };
    EncoderSnapshot {
        frozen: Arc::new(frozen),
        snapshot_step: step,
    }
}

impl EncoderSnapshot {
    pub fn identity(step: u64) -> Self {
        make_snapshot(&Encoder::Identity, step)
    }

    pub fn encode(&self, obs: &Observation) -> Result<Latent> {
        Ok(self.encode_batch(&[obs])?.pop().expect("one latent per observation"))
    }

    /// Posterior means for a batch of observations.
    pub fn encode_batch(&self, batch: &[&Observation]) -> Result<Vec<Latent>> {
        match &*self.frozen {
            Frozen::Identity => Ok(batch.iter().map(|o| Latent(o.data().to_vec())).collect()),
            Frozen::Vae { arch, params } => {
                let mut out = Vec::with_capacity(batch.len());
                for chunk in batch.chunks(256) {
                    out.extend(arch.posterior_mean(params, chunk)?.into_iter().map(Latent));
                }
                Ok(out)
            }
        }
    }
}

pub fn encode(snapshot: &EncoderSnapshot, obs: &Observation) -> Result<Latent> {
    snapshot.encode(obs)
}

/// Checks that an observation can be fed to the VAE input layer.
pub(crate) fn check_image(arch: &VaeArch, obs: &Observation) -> Result<()> {
    if obs.kind() != ObservationKind::Image || obs.shape() != arch.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("image {:?}", arch.input_shape()),
            actual: format!("{:?} {:?}", obs.kind(), obs.shape()),
        });
    }
    Ok(())
}
