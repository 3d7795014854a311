//! The interface the training loop drives, shared by both algorithms.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gctd3bc::DeterministicActor;
use crate::nn::SquashedGaussianPolicy;
use crate::oorb::SourcedBatch;

/// Diagnostics from one update step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean squared Bellman residual, averaged over critics.
    pub critic_loss: f64,
    /// Weighted pessimistic term, when it was evaluated.
    pub penalty: Option<f64>,
    /// Policy objective, when the policy was updated.
    pub policy_objective: Option<f64>,
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// One critic + policy update on `batch` with pessimism weight `weight`.
    fn update(&mut self, batch: &SourcedBatch, weight: f64, rng: &mut dyn RngCore) -> Result<UpdateStats>;

    /// Action used while collecting online data.
    fn explore_action(&self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// Deterministic action used for evaluation.
    fn eval_action(&self, obs: &[f64]) -> Result<Vec<f64>>;

    fn policy_snapshot(&self) -> PolicySnapshot;
}

/// Serializable deterministic evaluation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySnapshot {
    SquashedGaussian(SquashedGaussianPolicy),
    Deterministic(DeterministicActor),
}

impl PolicySnapshot {
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            PolicySnapshot::SquashedGaussian(p) => Ok(p.act_with_noise(obs, &vec![0.0; p.act_dim()])?.0),
            PolicySnapshot::Deterministic(a) => a.act(obs),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            PolicySnapshot::SquashedGaussian(p) => p.state_dim(),
            PolicySnapshot::Deterministic(a) => a.spec().input_dim(),
        }
    }
}

/// Critic input rows `state ‖ action`.
pub(crate) fn critic_inputs(states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate![Axis(1), states, actions]
}
