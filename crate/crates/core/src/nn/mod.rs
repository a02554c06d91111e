//! Minimal dense and convolutional building blocks with hand-written
//! backward passes. Parameters live in flat `Vec<f64>` buffers so that
//! optimizers, target-network averaging and checkpoints are slice ops.

pub mod adam;
pub mod conv;
pub mod mlp;

use rand::Rng;

pub use adam::Adam;
pub use conv::{Conv2d, ConvTranspose2d};
pub use mlp::{Mlp, MlpCache};

/// Fills `out` with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_fill<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, out: &mut [f64]) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

/// target <- (1 - tau) * target + tau * source
pub fn polyak_update(target: &mut [f64], source: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), source.len());
    if tau == 0.0 {
        return;
    }
    for (t, s) in target.iter_mut().zip(source) {
        *t += tau * (s - *t);
    }
}

pub fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}
