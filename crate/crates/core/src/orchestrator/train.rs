use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, References};
use super::record::{EvalRow, RunRecord};
use crate::agent::{Agent, UpdateStats};
use crate::envs::{EnvKind, Environment};
use crate::error::{Error, Result};
use crate::oorb::{weight_for, Oorb, Source, Transition};

/// Budgets and counters of the offline-to-online loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Offline update steps before any interaction.
    pub t_initial: usize,
    /// Environment steps per iteration.
    pub t_on: usize,
    /// Update steps per iteration.
    pub t_off: usize,
    /// Online step budget; the loop stops once `s_on > s_total`.
    pub s_total: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_initial: 5000,
            t_on: 1000,
            t_off: 2000,
            s_total: 20_000,
            eval_every: 1,
            eval_episodes: 10,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_on", self.t_on),
            ("t_off", self.t_off),
            ("s_total", self.s_total),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of iterations the loop performs: the smallest k with `k * t_on > s_total`.
    pub fn iterations(&self) -> usize {
        self.s_total / self.t_on + 1
    }
}

/// Which parts of the adaptive rule are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Weight follows the batch source.
    #[default]
    Full,
    /// Weight fixed at 1: always pessimistic.
    Wg,
    /// Weight fixed at 1 and the online buffer is never sampled.
    Wgo,
}

impl Variant {
    pub fn weight(self, source: Source) -> f64 {
        match self {
            Variant::Full => weight_for(source),
            Variant::Wg | Variant::Wgo => 1.0,
        }
    }

    pub fn offline_only(self) -> bool {
        self == Variant::Wgo
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Wg => "wg",
            Variant::Wgo => "wgo",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "wg" => Ok(Variant::Wg),
            "wgo" => Ok(Variant::Wgo),
            _ => Err(Error::InvalidConfig(format!(
                "unknown variant `{s}` (expected full, wg or wgo)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Independent ChaCha stream `id` under `master`.
pub fn seed_stream(master: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}

/// Random streams of one run, all derived from the master seed.
///
/// Batch sampling draws one seed per update step from `sampler`, so batch sources
/// do not depend on how much randomness the agent consumed.
#[derive(Debug, Clone)]
pub struct Streams {
    pub agent: ChaCha8Rng,
    pub sampler: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub episodes: ChaCha8Rng,
    pub eval_seed: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self {
            agent: seed_stream(master, 1),
            sampler: seed_stream(master, 2),
            explore: seed_stream(master, 3),
            episodes: seed_stream(master, 4),
            eval_seed: seed_stream(master, 5).next_u64(),
        }
    }

    /// Initialization stream for agent parameters.
    pub fn init(master: u64) -> ChaCha8Rng {
        seed_stream(master, 0)
    }
}

/// Averages of the update diagnostics over one phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseReport {
    pub updates: usize,
    pub online_batches: usize,
    pub critic_loss: Option<f64>,
    pub penalty: Option<f64>,
    pub policy_objective: Option<f64>,
}

#[derive(Default)]
struct Accumulator {
    updates: usize,
    online: usize,
    critic: f64,
    penalty: (f64, usize),
    policy: (f64, usize),
}

impl Accumulator {
    fn add(&mut self, source: Source, stats: &UpdateStats) {
        self.updates += 1;
        if source == Source::Online {
            self.online += 1;
        }
        self.critic += stats.critic_loss;
        if let Some(p) = stats.penalty {
            self.penalty.0 += p;
            self.penalty.1 += 1;
        }
        if let Some(o) = stats.policy_objective {
            self.policy.0 += o;
            self.policy.1 += 1;
        }
    }

    fn report(&self) -> PhaseReport {
        let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
        PhaseReport {
            updates: self.updates,
            online_batches: self.online,
            critic_loss: mean((self.critic, self.updates)),
            penalty: mean(self.penalty),
            policy_objective: mean(self.policy),
        }
    }
}

fn update_step(
    agent: &mut dyn Agent,
    oorb: &Oorb,
    s_on: usize,
    variant: Variant,
    streams: &mut Streams,
    record: &mut RunRecord,
    acc: &mut Accumulator,
) -> Result<()> {
    let mut step_rng = ChaCha8Rng::seed_from_u64(streams.sampler.next_u64());
    let batch = oorb.sample_with(s_on, variant.offline_only(), &mut step_rng)?;
    let weight = variant.weight(batch.source);
    let stats = agent.update(&batch, weight, &mut streams.agent)?;
    record.batch_log.push((batch.source, weight));
    acc.add(batch.source, &stats);
    Ok(())
}

/// Offline pretraining: `t_initial` updates with weight 1 and no interaction.
pub fn pretrain(
    agent: &mut dyn Agent,
    oorb: &Oorb,
    schedule: &Schedule,
    streams: &mut Streams,
    record: &mut RunRecord,
) -> Result<PhaseReport> {
    if oorb.offline_len() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut acc = Accumulator::default();
    for _ in 0..schedule.t_initial {
        // No online steps yet, so every batch is offline and weighted 1 in every variant.
        update_step(agent, oorb, 0, Variant::Wg, streams, record, &mut acc)?;
    }
    record.pretrain_updates = acc.updates;
    Ok(acc.report())
}

struct Collector {
    env: Box<dyn Environment>,
    obs: Option<Vec<f64>>,
}

impl Collector {
    fn step(&mut self, agent: &dyn Agent, streams: &mut Streams) -> Result<Transition> {
        let state = match self.obs.take() {
            Some(obs) => obs,
            None => self.env.reset(streams.episodes.next_u64()),
        };
        let action = self
            .env
            .spec()
            .clamp_action(&agent.explore_action(&state, &mut streams.explore)?);
        let result = self.env.step(&action)?;
        if !result.done() {
            self.obs = Some(result.observation.clone());
        }
        Ok(Transition {
            state,
            action,
            reward: result.reward,
            next_state: result.observation,
            terminal: result.terminal,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_row(
    agent: &dyn Agent,
    env: EnvKind,
    schedule: &Schedule,
    refs: &References,
    streams: &Streams,
    iteration: usize,
    s_on: usize,
    report: &PhaseReport,
) -> Result<EvalRow> {
    let mean_return = evaluate(
        |obs| agent.eval_action(obs),
        env,
        schedule.eval_episodes,
        streams.eval_seed,
    )?;
    Ok(EvalRow {
        iteration,
        s_on,
        mean_return,
        normalized_score: refs.score(mean_return)?,
        critic_loss: report.critic_loss,
        penalty_value: report.penalty,
        policy_objective: report.policy_objective,
    })
}

/// The interaction/update loop after pretraining.
///
/// Row 0 evaluates the agent as it left pretraining; `pretrained` supplies its diagnostics.
/// Every evaluation reuses the same episode seeds. On error the rows written so far stay
/// in `record`.
#[allow(clippy::too_many_arguments)]
pub fn run(
    agent: &mut dyn Agent,
    env: EnvKind,
    oorb: &mut Oorb,
    schedule: &Schedule,
    variant: Variant,
    refs: &References,
    streams: &mut Streams,
    pretrained: &PhaseReport,
    record: &mut RunRecord,
) -> Result<()> {
    schedule.validate()?;
    let row = eval_row(&*agent, env, schedule, refs, streams, 0, 0, pretrained)?;
    record.push_row(row);

    let mut collector = Collector {
        env: env.make(),
        obs: None,
    };
    let mut s_on = 0usize;
    let mut iteration = 0usize;
    loop {
        for _ in 0..schedule.t_on {
            let t = collector.step(&*agent, streams)?;
            oorb.push_online(t)?;
        }
        s_on += schedule.t_on;
        record.s_on = s_on;

        let mut acc = Accumulator::default();
        for _ in 0..schedule.t_off {
            update_step(agent, oorb, s_on, variant, streams, record, &mut acc)?;
        }
        record.online_updates += acc.updates;
        iteration += 1;
        record.iterations = iteration;

        let last = s_on > schedule.s_total;
        if last || iteration.is_multiple_of(schedule.eval_every) {
            let row = eval_row(&*agent, env, schedule, refs, streams, iteration, s_on, &acc.report())?;
            record.push_row(row);
        }
        if last {
            return Ok(());
        }
    }
}
