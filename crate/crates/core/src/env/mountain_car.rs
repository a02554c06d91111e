use rand::Rng;

use super::render::{soft_disc, Canvas};
use super::Dynamics;
use crate::error::{Error, Result};

pub const DEFAULT_FLAG: f64 = 0.45;
pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const POWER: f64 = 0.0015;
pub const GRAVITY: f64 = 0.0025;
const CAR_RADIUS: f64 = 0.07;

/// Continuous mountain car; state is (position, velocity).
#[derive(Debug, Clone)]
pub struct MountainCar {
    flag: f64,
}

pub fn hill_height(position: f64) -> f64 {
    (3.0 * position).sin() * 0.45 + 0.55
}

impl MountainCar {
    pub fn new(goal: &[f64]) -> Result<Self> {
        match goal {
            [flag] if (-0.4..=MAX_POSITION).contains(flag) => Ok(Self { flag: *flag }),
            _ => Err(Error::Config(format!(
                "mountain-car goal must be one flag position in [-0.4, {MAX_POSITION}], got {goal:?}"
            ))),
        }
    }
}

impl Dynamics for MountainCar {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![rng.random_range(-0.6..=-0.4), 0.0]
    }

    fn advance(&self, values: &mut [f64], action: &[f64]) {
        let (mut position, mut velocity) = (values[0], values[1]);
        velocity += POWER * action[0] - GRAVITY * (3.0 * position).cos();
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        position = (position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        values[0] = position;
        values[1] = velocity;
    }

    fn success(&self, values: &[f64]) -> bool {
        values[0] >= self.flag
    }

    fn potential(&self, values: &[f64]) -> f64 {
        values[0]
    }

    fn features(&self, values: &[f64]) -> Vec<f64> {
        vec![(values[0] + 0.3) / 0.9, values[1] / MAX_SPEED]
    }

    fn vector_observation(&self, values: &[f64]) -> Vec<f64> {
        self.features(values)
    }

    fn render(&self, values: &[f64], pixels: &mut [f64]) {
        let canvas = Canvas::new(MIN_POSITION, MAX_POSITION, 0.0, 1.25);
        let position = values[0];
        let car_y = hill_height(position) + CAR_RADIUS;
        let flag_base = hill_height(self.flag);
        canvas.paint(pixels, |x, y, px| {
            let track = 0.4 * (1.0 - ((y - hill_height(x)).abs() / px)).clamp(0.0, 1.0);
            let pole = if y >= flag_base && y <= flag_base + 0.2 {
                0.7 * (1.0 - (x - self.flag).abs() / px).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let car = soft_disc(x - position, y - car_y, CAR_RADIUS, px);
            track.max(pole).max(car)
        });
    }
}
