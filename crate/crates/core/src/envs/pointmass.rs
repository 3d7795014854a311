use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

const DT: f64 = 0.1;
const HORIZON: usize = 100;
const MAX_SPEED: f64 = 2.0;
pub const GOAL: [f64; 2] = [0.0, 0.0];
pub const GOAL_RADIUS: f64 = 0.05;

/// 2-D double integrator driven toward a fixed goal.
///
/// Observation is `(x, y, vx, vy)`; the episode terminates inside the goal radius.
#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    elapsed: usize,
    finished: bool,
    rng: ChaCha8Rng,
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pointmass".into(),
                obs_dim: 4,
                act_dim: 2,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
                max_episode_steps: HORIZON,
                dt: DT,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            elapsed: 0,
            finished: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.elapsed = 0;
        self.finished = false;
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn goal_distance(&self) -> f64 {
        (self.pos[0] - GOAL[0]).hypot(self.pos[1] - GOAL[1])
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)];
        self.vel = [0.0; 2];
        self.elapsed = 0;
        self.finished = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        if self.finished || self.elapsed >= self.spec.max_episode_steps {
            return Err(Error::EpisodeFinished);
        }
        let u = self.spec.clamp_action(action);
        for (k, uk) in u.iter().enumerate() {
            self.vel[k] = (self.vel[k] + uk * DT).clamp(-MAX_SPEED, MAX_SPEED);
            self.pos[k] += self.vel[k] * DT;
        }
        self.elapsed += 1;
        let dist = self.goal_distance();
        let reward = -dist - 0.01 * (u[0] * u[0] + u[1] * u[1]);
        let terminal = dist < GOAL_RADIUS;
        let truncated = !terminal && self.elapsed >= self.spec.max_episode_steps;
        self.finished = terminal || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            truncated,
        })
    }

    fn physical_state(&self) -> Vec<f64> {
        self.observation()
    }

    fn elapsed_steps(&self) -> usize {
        self.elapsed
    }
}
