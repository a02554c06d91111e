use rand::Rng;

use super::render::{soft_disc, soft_ring, Canvas};
use super::Dynamics;
use crate::error::{Error, Result};

pub const DEFAULT_GOAL: [f64; 2] = [2.5, 2.5];
pub const ARENA: f64 = 5.0;
pub const START_HALF_WIDTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 1.0;
const AGENT_RADIUS: f64 = 0.35;

/// Double integrator in the square arena [-5, 5]^2. State is (x, y, vx, vy).
#[derive(Debug, Clone)]
pub struct PointMass {
    goal: [f64; 2],
    success_radius: f64,
}

impl PointMass {
    pub fn new(goal: &[f64], success_radius: f64) -> Result<Self> {
        let [gx, gy] = <[f64; 2]>::try_from(goal)
            .map_err(|_| Error::Config(format!("point-mass goal must have 2 components, got {}", goal.len())))?;
        if gx.abs() > ARENA || gy.abs() > ARENA {
            return Err(Error::Config(format!("point-mass goal ({gx}, {gy}) outside the arena")));
        }
        // distance from the goal to the start square
        let dx = (gx.abs() - START_HALF_WIDTH).max(0.0);
        let dy = (gy.abs() - START_HALF_WIDTH).max(0.0);
        if dx.hypot(dy) <= success_radius {
            return Err(Error::Config(format!(
                "point-mass goal ({gx}, {gy}) overlaps the start region"
            )));
        }
        Ok(Self {
            goal: [gx, gy],
            success_radius,
        })
    }

    fn distance(&self, values: &[f64]) -> f64 {
        (values[0] - self.goal[0]).hypot(values[1] - self.goal[1])
    }
}

impl Dynamics for PointMass {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn sample_initial(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let x = rng.random_range(-START_HALF_WIDTH..=START_HALF_WIDTH);
        let y = rng.random_range(-START_HALF_WIDTH..=START_HALF_WIDTH);
        vec![x, y, 0.0, 0.0]
    }

    fn advance(&self, values: &mut [f64], action: &[f64]) {
        for axis in 0..2 {
            let v = (values[2 + axis] + DT * action[axis]).clamp(-MAX_SPEED, MAX_SPEED);
            values[2 + axis] = v;
            values[axis] = (values[axis] + DT * v).clamp(-ARENA, ARENA);
        }
    }

    fn success(&self, values: &[f64]) -> bool {
        self.distance(values) <= self.success_radius
    }

    fn potential(&self, values: &[f64]) -> f64 {
        -self.distance(values)
    }

    fn features(&self, values: &[f64]) -> Vec<f64> {
        vec![values[0] / ARENA, values[1] / ARENA, values[2], values[3]]
    }

    /// Position only, matching what the rendered frame shows.
    fn vector_observation(&self, values: &[f64]) -> Vec<f64> {
        values[..2].to_vec()
    }

    fn render(&self, values: &[f64], pixels: &mut [f64]) {
        let canvas = Canvas::new(-ARENA, ARENA, -ARENA, ARENA);
        canvas.paint(pixels, |x, y, px| {
            let ring = 0.5 * soft_ring(x - self.goal[0], y - self.goal[1], self.success_radius, px);
            let disc = soft_disc(x - values[0], y - values[1], AGENT_RADIUS, px);
            ring.max(disc)
        });
    }
}
