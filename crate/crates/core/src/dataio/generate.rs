//! Offline datasets at several behavior-quality tiers.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::format::{DatasetFile, DatasetHeader, FORMAT_VERSION};
use crate::agent::Agent;
use crate::envs::{scripted_expert_action, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::gcql::{Gcql, GcqlConfig};
use crate::oorb::{Oorb, OorbConfig, Source, Transition};
use crate::orchestrator::{evaluate, random_action, seed_stream};

/// Standard deviation of the expert's action noise, in half-ranges.
pub const EXPERT_NOISE: f64 = 0.05;
/// Probability that the medium behavior follows the expert on a given step.
pub const MEDIUM_EXPERT_PROB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Random,
    Medium,
    Expert,
    MediumReplay,
    MediumExpert,
}

impl Tier {
    pub const ALL: [Tier; 5] = [
        Tier::Random,
        Tier::Medium,
        Tier::Expert,
        Tier::MediumReplay,
        Tier::MediumExpert,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Tier::Random => "random",
            Tier::Medium => "medium",
            Tier::Expert => "expert",
            Tier::MediumReplay => "medium-replay",
            Tier::MediumExpert => "medium-expert",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.tag() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::UnknownTier(s.to_string()))
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Action of a fixed scripted behavior tier; `Random`, `Medium` and `Expert` only.
pub fn behavior_action(tier: Tier, env: &dyn Environment, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let spec = env.spec();
    let expert = || scripted_expert_action(&spec.name, &env.physical_state());
    match tier {
        Tier::Random => Ok(random_action(spec, rng)),
        Tier::Expert => {
            let half = spec.action_half_range();
            let mut a = expert()?;
            for (x, h) in a.iter_mut().zip(&half) {
                let eps: f64 = rng.sample(StandardNormal);
                *x += EXPERT_NOISE * h * eps;
            }
            Ok(spec.clamp_action(&a))
        }
        Tier::Medium => {
            if rng.random::<f64>() < MEDIUM_EXPERT_PROB {
                expert()
            } else {
                Ok(random_action(spec, rng))
            }
        }
        Tier::MediumReplay | Tier::MediumExpert => Err(Error::InvalidConfig(format!(
            "tier {tier} is not a fixed behavior policy"
        ))),
    }
}

/// Rolls out a scripted tier until `n` transitions are logged.
fn scripted_records(env_kind: EnvKind, tier: Tier, n: usize, seed: u64) -> Result<Vec<Transition>> {
    let mut episode_seeds = seed_stream(seed, 1);
    let mut action_rng = seed_stream(seed, 2);
    let mut env = env_kind.make();
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let mut obs = env.reset(episode_seeds.next_u64());
        loop {
            let action = behavior_action(tier, &*env, &mut action_rng)?;
            let step = env.step(&action)?;
            records.push(Transition {
                state: obs,
                action,
                reward: step.reward,
                next_state: step.observation.clone(),
                terminal: step.terminal,
            });
            if step.done() || records.len() == n {
                break;
            }
            obs = step.observation;
        }
    }
    Ok(records)
}

/// Mean undiscounted return of a scripted tier over `episodes` episodes.
pub fn behavior_returns(env_kind: EnvKind, tier: Tier, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut episode_seeds = seed_stream(seed, 1);
    let mut action_rng = seed_stream(seed, 2);
    let mut env = env_kind.make();
    (0..episodes)
        .map(|_| {
            crate::orchestrator::rollout(&mut *env, episode_seeds.next_u64(), |e, _| {
                behavior_action(tier, e, &mut action_rng)
            })
        })
        .collect()
}

/// Returns of the episodes stored back to back in `records`.
///
/// An episode ends at a terminal record or after `horizon` records; a trailing
/// partial episode is dropped.
pub fn episode_returns(records: &[Transition], horizon: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let (mut total, mut len) = (0.0, 0);
    for t in records {
        total += t.reward;
        len += 1;
        if t.terminal || len == horizon {
            out.push(total);
            total = 0.0;
            len = 0;
        }
    }
    out
}

/// Settings of the online learner whose interaction log forms the medium-replay tier.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySettings {
    pub agent: GcqlConfig,
    pub batch_size: usize,
    /// Environment steps between evaluations.
    pub chunk: usize,
    /// Update steps per environment step.
    pub updates_per_step: usize,
    pub eval_episodes: usize,
    /// Episodes used to estimate the medium tier's return.
    pub reference_episodes: usize,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            agent: GcqlConfig::default(),
            batch_size: 256,
            chunk: 1000,
            updates_per_step: 1,
            eval_episodes: 10,
            reference_episodes: 100,
        }
    }
}

/// Interaction log of an online agent trained from scratch, stopped when its
/// evaluation return first reaches the medium tier's mean return (or at `n`).
pub fn medium_replay_records(
    env_kind: EnvKind,
    n: usize,
    seed: u64,
    settings: &ReplaySettings,
) -> Result<Vec<Transition>> {
    let spec = env_kind.spec();
    let medium = behavior_returns(env_kind, Tier::Medium, settings.reference_episodes, seed)?;
    let target = medium.iter().sum::<f64>() / medium.len() as f64;

    let mut agent = Gcql::new(
        spec.obs_dim,
        &spec.action_low,
        &spec.action_high,
        settings.agent.clone(),
        &mut seed_stream(seed, 3),
    )?;
    // only the large buffer is used: every batch is uniform over the whole log
    let mut log = Oorb::new(
        OorbConfig {
            p: 0.0,
            starting_size: usize::MAX,
            online_capacity: settings.batch_size,
            offline_capacity: n.max(settings.batch_size),
            batch_size: settings.batch_size,
        },
        spec.obs_dim,
        spec.act_dim,
    )?;
    let mut agent_rng = seed_stream(seed, 4);
    let mut sample_rng = seed_stream(seed, 5);
    let mut explore_rng = seed_stream(seed, 6);
    let mut episode_seeds = seed_stream(seed, 7);
    let eval_seed = seed_stream(seed, 8).next_u64();

    let mut env = env_kind.make();
    let mut records = Vec::with_capacity(n);
    let mut obs: Option<Vec<f64>> = None;
    while records.len() < n {
        let chunk_end = (records.len() + settings.chunk).min(n);
        while records.len() < chunk_end {
            let state = obs.take().unwrap_or_else(|| env.reset(episode_seeds.next_u64()));
            let action = spec.clamp_action(&agent.explore_action(&state, &mut explore_rng)?);
            let step = env.step(&action)?;
            if !step.done() {
                obs = Some(step.observation.clone());
            }
            let t = Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.observation,
                terminal: step.terminal,
            };
            log.push_online(t.clone())?;
            records.push(t);
            if log.offline_len() >= settings.batch_size {
                for _ in 0..settings.updates_per_step {
                    let batch = log.sample(0, &mut sample_rng)?;
                    debug_assert_eq!(batch.source, Source::Offline);
                    agent.update(&batch, 0.0, &mut agent_rng)?;
                }
            }
        }
        let score = evaluate(|o| agent.eval_action(o), env_kind, settings.eval_episodes, eval_seed)?;
        if score >= target {
            break;
        }
    }
    Ok(records)
}

fn header(env_kind: EnvKind, tier: Tier, n_records: usize, seed: u64) -> DatasetHeader {
    let spec = env_kind.spec();
    DatasetHeader {
        format_version: FORMAT_VERSION,
        env_name: spec.name,
        obs_dim: spec.obs_dim,
        act_dim: spec.act_dim,
        n_records,
        behavior_tag: tier.tag().to_string(),
        generator_seed: seed,
        provenance: Vec::new(),
    }
}

/// Builds a dataset of `n` transitions (medium-replay may stop earlier; medium-expert
/// holds `2 * (n / 2)`). A pure function of its arguments.
pub fn generate_dataset(env_kind: EnvKind, tier: Tier, n: usize, seed: u64) -> Result<DatasetFile> {
    generate_dataset_with(env_kind, tier, n, seed, &ReplaySettings::default())
}

pub fn generate_dataset_with(
    env_kind: EnvKind,
    tier: Tier,
    n: usize,
    seed: u64,
    replay: &ReplaySettings,
) -> Result<DatasetFile> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (records, provenance) = match tier {
        Tier::Random | Tier::Medium | Tier::Expert => (scripted_records(env_kind, tier, n, seed)?, Vec::new()),
        Tier::MediumReplay => (medium_replay_records(env_kind, n, seed, replay)?, Vec::new()),
        Tier::MediumExpert => {
            let half = n / 2;
            if half == 0 {
                return Err(Error::EmptyDataset);
            }
            let mut records = scripted_records(env_kind, Tier::Medium, half, seed_stream(seed, 10).next_u64())?;
            records.extend(scripted_records(
                env_kind,
                Tier::Expert,
                half,
                seed_stream(seed, 11).next_u64(),
            )?);
            (
                records,
                vec![Tier::Medium.tag().to_string(), Tier::Expert.tag().to_string()],
            )
        }
    };
    let mut header = header(env_kind, tier, records.len(), seed);
    header.provenance = provenance;
    Ok(DatasetFile { header, records })
}
