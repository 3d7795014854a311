use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{scripted_expert_action, EnvKind, EnvSpec, Environment};
use crate::error::{Error, Result};

/// Returns that anchor the normalized score: 0 for random, 100 for the expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub random: f64,
    pub expert: f64,
}

/// `100 * (raw - random) / (expert - random)`.
pub fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) {
        return Err(Error::DegenerateScale {
            random: random_ref,
            expert: expert_ref,
        });
    }
    Ok(100.0 * (raw - random_ref) / (expert_ref - random_ref))
}

impl References {
    pub fn score(&self, raw: f64) -> Result<f64> {
        normalized_score(raw, self.random, self.expert)
    }
}

/// Runs one full episode from `seed`; the controller sees the env and the observation.
pub fn rollout<F>(env: &mut dyn Environment, seed: u64, mut controller: F) -> Result<f64>
where
    F: FnMut(&dyn Environment, &[f64]) -> Result<Vec<f64>>,
{
    let mut obs = env.reset(seed);
    let mut total = 0.0;
    loop {
        let action = controller(&*env, &obs)?;
        let step = env.step(&action)?;
        total += step.reward;
        if step.done() {
            return Ok(total);
        }
        obs = step.observation;
    }
}

fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Undiscounted return of each of `episodes` fresh episodes under a deterministic policy.
pub fn evaluate_returns<F>(policy: F, env: EnvKind, episodes: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    episode_seeds(seed, episodes)
        .into_iter()
        .map(|s| rollout(env.make().as_mut(), s, |_, obs| policy(obs)))
        .collect()
}

/// Mean undiscounted return over `episodes` fresh episodes.
pub fn evaluate<F>(policy: F, env: EnvKind, episodes: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let returns = evaluate_returns(policy, env, episodes, seed)?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

pub fn random_action<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> Vec<f64> {
    spec.action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(&l, &h)| rng.random_range(l..h))
        .collect()
}

/// Mean returns of the uniform-random policy and of the scripted expert.
pub fn compute_references(env: EnvKind, seed: u64, episodes: usize) -> Result<References> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("references need at least one episode".into()));
    }
    let spec = env.spec();
    let seeds = episode_seeds(seed, episodes);
    let mut action_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a9d);
    let mut random = 0.0;
    let mut expert = 0.0;
    for &s in &seeds {
        random += rollout(env.make().as_mut(), s, |_, _| Ok(random_action(&spec, &mut action_rng)))?;
        expert += rollout(env.make().as_mut(), s, |e, _| {
            scripted_expert_action(env.name(), &e.physical_state())
        })?;
    }
    Ok(References {
        random: random / episodes as f64,
        expert: expert / episodes as f64,
    })
}
