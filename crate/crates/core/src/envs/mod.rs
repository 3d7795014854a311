//! Seedable toy continuous-control tasks and their scripted experts.

mod expert;
mod pendulum;
mod pointmass;

pub use expert::scripted_expert_action;
pub use pendulum::Pendulum;
pub use pointmass::PointMass;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub dt: f64,
}

impl EnvSpec {
    pub fn action_half_range(&self) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect()
    }

    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (l, h))| a.clamp(*l, *h))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True environment termination; bootstrapping stops here.
    pub terminal: bool,
    /// Time-limit cutoff; never implies `terminal`.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode from the initial-state distribution under `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step; the action is clamped into the box first.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Internal state consumed by the scripted expert.
    fn physical_state(&self) -> Vec<f64>;

    fn elapsed_steps(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Pendulum,
    PointMass,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::PointMass => "pointmass",
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Pendulum => Box::new(Pendulum::new()),
            EnvKind::PointMass => Box::new(PointMass::new()),
        }
    }

    pub fn spec(self) -> EnvSpec {
        self.make().spec().clone()
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "pointmass" | "point-mass" => Ok(EnvKind::PointMass),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    Ok(name.parse::<EnvKind>()?.make())
}

fn check_action(spec: &EnvSpec, action: &[f64]) -> Result<()> {
    if action.len() != spec.act_dim {
        return Err(Error::DimensionMismatch {
            context: "action",
            expected: spec.act_dim,
            actual: action.len(),
        });
    }
    Ok(())
}
