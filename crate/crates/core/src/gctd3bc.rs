//! Greedy-conservative TD3 with behavior cloning.
//!
//! Twin critics learn clipped double-Q targets with target policy smoothing.
//! Every `policy_delay` critic steps the deterministic actor ascends
//! `λ Q₁(s, π(s)) - W ‖π(s) - a‖²`, where `W` is the batch weight.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent::{critic_inputs, Agent, PolicySnapshot, UpdateStats};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, box_affine, forward_batch, input_gradient, loss, mlp_forward, polyak_update, Activation,
    AdamState, MlpSpec, ParameterVector,
};
use crate::oorb::{BatchArrays, SourcedBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Fixed,
    Normalized,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LambdaMode::Fixed),
            "normalized" => Ok(LambdaMode::Normalized),
            other => Err(Error::InvalidConfig(format!("unknown lambda mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LambdaMode::Fixed => "fixed",
            LambdaMode::Normalized => "normalized",
        })
    }
}

/// Noise magnitudes are in units of the per-dimension action half-range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gctd3bcConfig {
    pub gamma: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub tau: f64,
    pub lambda_mode: LambdaMode,
    pub lambda_fixed: f64,
    pub alpha_norm: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    /// Gaussian exploration noise while collecting.
    pub explore_noise: f64,
    pub hidden: Vec<usize>,
}

impl Default for Gctd3bcConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            tau: 0.005,
            lambda_mode: LambdaMode::Normalized,
            lambda_fixed: 1.0,
            alpha_norm: 2.5,
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            explore_noise: 0.1,
            hidden: vec![64, 64],
        }
    }
}

impl Gctd3bcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.policy_noise >= 0.0) || !(self.noise_clip >= 0.0) || !(self.explore_noise >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be >= 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lambda_fixed > 0.0) || !(self.alpha_norm > 0.0) {
            return bad("lambda_fixed and alpha_norm must be positive");
        }
        if !(self.critic_lr > 0.0) || !(self.actor_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// Tanh-output network scaled onto the action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicActor {
    spec: MlpSpec,
    params: ParameterVector,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

impl DeterministicActor {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_low: &[f64],
        action_high: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(obs_dim, hidden, action_low.len(), Activation::Relu, Activation::Tanh)?;
        let params = spec.init_params(rng);
        Self::from_parts(spec, params, action_low.to_vec(), action_high.to_vec())
    }

    pub fn from_parts(
        spec: MlpSpec,
        params: ParameterVector,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
    ) -> Result<Self> {
        spec.check_params(&params)?;
        box_affine(&action_low, &action_high)?;
        if spec.output_dim() != action_low.len() || spec.output_activation() != Activation::Tanh {
            return Err(Error::InvalidConfig(
                "actor must have a tanh output of action dimension".into(),
            ));
        }
        Ok(Self {
            spec,
            params,
            action_low,
            action_high,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn action_low(&self) -> &[f64] {
        &self.action_low
    }

    pub fn action_high(&self) -> &[f64] {
        &self.action_high
    }

    fn scale_offset(&self) -> (Vec<f64>, Vec<f64>) {
        box_affine(&self.action_low, &self.action_high).expect("validated at construction")
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (scale, offset) = self.scale_offset();
        let y = mlp_forward(&self.spec, &self.params, obs)?;
        Ok(y.iter()
            .zip(scale.iter().zip(&offset))
            .map(|(y, (s, o))| o + s * y)
            .collect())
    }

    /// Batch actions for `params` (the actor's own or its target's).
    pub fn actions_with(&self, params: &ParameterVector, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (scale, offset) = self.scale_offset();
        let tape = forward_batch(&self.spec, params, states)?;
        Ok(&tape.output() * &ArrayView1::from(&scale) + ArrayView1::from(&offset))
    }
}

/// Twin critics, their targets, the actor and its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinCritics {
    critic_spec: MlpSpec,
    critics: [ParameterVector; 2],
    targets: [ParameterVector; 2],
    actor: DeterministicActor,
    target_actor: ParameterVector,
}

impl TwinCritics {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let act_dim = action_low.len();
        let critic_spec = MlpSpec::with_hidden(obs_dim + act_dim, hidden, 1, Activation::Relu, Activation::Identity)?;
        let critics = [critic_spec.init_params(rng), critic_spec.init_params(rng)];
        let actor = DeterministicActor::new(obs_dim, hidden, action_low, action_high, rng)?;
        Ok(Self {
            targets: critics.clone(),
            target_actor: actor.params().clone(),
            critic_spec,
            critics,
            actor,
        })
    }

    pub fn from_parts(
        critic_spec: MlpSpec,
        critics: [ParameterVector; 2],
        targets: [ParameterVector; 2],
        actor: DeterministicActor,
        target_actor: ParameterVector,
    ) -> Result<Self> {
        for p in critics.iter().chain(&targets) {
            critic_spec.check_params(p)?;
        }
        actor.spec().check_params(&target_actor)?;
        if critic_spec.input_dim() != actor.spec().input_dim() + actor.spec().output_dim()
            || critic_spec.output_dim() != 1
        {
            return Err(Error::InvalidConfig("critic input must be state ‖ action".into()));
        }
        Ok(Self {
            critic_spec,
            critics,
            targets,
            actor,
            target_actor,
        })
    }

    pub fn critic_spec(&self) -> &MlpSpec {
        &self.critic_spec
    }

    pub fn critic(&self, i: usize) -> &ParameterVector {
        &self.critics[i]
    }

    pub fn target(&self, i: usize) -> &ParameterVector {
        &self.targets[i]
    }

    pub fn actor(&self) -> &DeterministicActor {
        &self.actor
    }

    pub fn target_actor(&self) -> &ParameterVector {
        &self.target_actor
    }

    pub fn critic_values(&self, i: usize, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(forward_batch(&self.critic_spec, &self.critics[i], inputs)?
            .output()
            .column(0)
            .to_owned())
    }

    fn target_values(&self, i: usize, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(forward_batch(&self.critic_spec, &self.targets[i], inputs)?
            .output()
            .column(0)
            .to_owned())
    }
}

/// Smoothed next actions `clamp(π̂(s') + clamp(ε, -c, c))`, ε ~ N(0, σ²).
pub fn smoothed_next_actions<R: Rng + ?Sized>(
    model: &TwinCritics,
    next_states: ArrayView2<'_, f64>,
    cfg: &Gctd3bcConfig,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let actor = model.actor();
    let mut actions = actor.actions_with(model.target_actor(), next_states)?;
    let (half, _) = box_affine(actor.action_low(), actor.action_high())?;
    for mut row in actions.rows_mut() {
        for (j, a) in row.iter_mut().enumerate() {
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.policy_noise * half[j];
            let clip = cfg.noise_clip * half[j];
            *a = (*a + eps.clamp(-clip, clip)).clamp(actor.action_low()[j], actor.action_high()[j]);
        }
    }
    Ok(actions)
}

/// Clipped double-Q targets `r + γ (1 - terminal) min(Q̂₁, Q̂₂)(s', a')`.
pub fn td3_target<R: Rng + ?Sized>(
    model: &TwinCritics,
    batch: &BatchArrays,
    cfg: &Gctd3bcConfig,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let next_actions = smoothed_next_actions(model, batch.next_states.view(), cfg, rng)?;
    let inputs = critic_inputs(batch.next_states.view(), next_actions.view());
    let q1 = model.target_values(0, inputs.view())?;
    let q2 = model.target_values(1, inputs.view())?;
    Ok(Array1::from_shape_fn(batch.rewards.len(), |b| {
        batch.rewards[b] + cfg.gamma * (1.0 - batch.terminals[b]) * q1[b].min(q2[b])
    }))
}

/// One Adam step per critic on the squared residual to the shared target, then Polyak targets.
///
/// Returns the mean of the two critic losses.
pub fn td3_critic_update<R: Rng + ?Sized>(
    model: &mut TwinCritics,
    optimizers: &mut [AdamState; 2],
    batch: &BatchArrays,
    cfg: &Gctd3bcConfig,
    rng: &mut R,
) -> Result<f64> {
    if batch.rewards.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let y = td3_target(model, batch, cfg, rng)?;
    let inputs = critic_inputs(batch.states.view(), batch.actions.view());
    let mut steps = Vec::with_capacity(2);
    for i in 0..2 {
        let tape = forward_batch(&model.critic_spec, &model.critics[i], inputs.view())?;
        let q = tape.output().column(0).to_owned();
        let (value, grad) = loss::mean_squared_error(q.as_slice().unwrap(), y.as_slice().unwrap());
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { critic: i });
        }
        let d_out = Array2::from_shape_vec((grad.len(), 1), grad).expect("column vector");
        let (grads, _) = backward(&model.critic_spec, &model.critics[i], &tape, d_out.view())?;
        steps.push((value, grads));
    }
    for (i, (_, grads)) in steps.iter().enumerate() {
        adam_step(&mut model.critics[i], grads, &mut optimizers[i])?;
    }
    for i in 0..2 {
        polyak_update(&mut model.targets[i], &model.critics[i], cfg.tau)?;
    }
    Ok(0.5 * (steps[0].0 + steps[1].0))
}

/// Trade-off `λ` between the value term and behavior cloning.
pub fn lambda_value(model: &TwinCritics, batch: &BatchArrays, cfg: &Gctd3bcConfig) -> Result<f64> {
    match cfg.lambda_mode {
        LambdaMode::Fixed => Ok(cfg.lambda_fixed),
        LambdaMode::Normalized => {
            let q = model.critic_values(0, critic_inputs(batch.states.view(), batch.actions.view()).view())?;
            let mean_abs = q.iter().map(|v| v.abs()).sum::<f64>() / q.len() as f64;
            Ok(cfg.alpha_norm / (mean_abs + 1e-8))
        }
    }
}

/// Actor objective terms and the gradient of its negation.
#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub objective: f64,
    pub value_term: f64,
    /// `weight * mean ‖π(s) - a‖²`, if evaluated.
    pub bc_term: Option<f64>,
    pub grads: Vec<f64>,
}

/// Gradient of `-(λ mean Q₁(s, π(s)) - weight mean ‖π(s) - a‖²)` in the actor parameters.
///
/// With `weight == 0` the cloning term is skipped entirely.
pub fn actor_loss_gradient(model: &TwinCritics, batch: &BatchArrays, lambda: f64, weight: f64) -> Result<ActorLoss> {
    let actor = model.actor();
    let rows = batch.states.nrows();
    let obs_dim = batch.states.ncols();
    let (scale, offset) = box_affine(actor.action_low(), actor.action_high())?;
    let actor_tape = forward_batch(actor.spec(), actor.params(), batch.states.view())?;
    let actions = &actor_tape.output() * &ArrayView1::from(&scale) + ArrayView1::from(&offset);
    let inputs = critic_inputs(batch.states.view(), actions.view());
    let critic_tape = forward_batch(&model.critic_spec, &model.critics[0], inputs.view())?;
    let value_term = lambda * critic_tape.output().sum() / rows as f64;
    let d_q = Array2::from_elem((rows, 1), -lambda / rows as f64);
    let d_in = input_gradient(&model.critic_spec, &model.critics[0], &critic_tape, d_q.view())?;
    let mut d_actions = d_in.slice(s![.., obs_dim..]).to_owned();
    let mut bc_term = None;
    if weight != 0.0 {
        let diff = &actions - &batch.actions;
        let sq = diff.iter().map(|d| d * d).sum::<f64>() / rows as f64;
        d_actions.scaled_add(2.0 * weight / rows as f64, &diff);
        bc_term = Some(weight * sq);
    }
    let d_tanh = &d_actions * &ArrayView1::from(&scale);
    let (grads, _) = backward(actor.spec(), actor.params(), &actor_tape, d_tanh.view())?;
    Ok(ActorLoss {
        objective: value_term - bc_term.unwrap_or(0.0),
        value_term,
        bc_term,
        grads,
    })
}

/// One actor ascent step followed by the target-actor Polyak update.
pub fn gctd3bc_policy_update(
    model: &mut TwinCritics,
    optimizer: &mut AdamState,
    batch: &BatchArrays,
    weight: f64,
    cfg: &Gctd3bcConfig,
) -> Result<ActorLoss> {
    let lambda = lambda_value(model, batch, cfg)?;
    let result = actor_loss_gradient(model, batch, lambda, weight)?;
    adam_step(model.actor.params_mut(), &result.grads, optimizer)?;
    polyak_update(&mut model.target_actor, model.actor.params(), cfg.tau)?;
    Ok(result)
}

/// GCTD3BC agent with delayed actor updates.
#[derive(Debug, Clone)]
pub struct Gctd3bc {
    cfg: Gctd3bcConfig,
    model: TwinCritics,
    critic_optimizers: [AdamState; 2],
    actor_optimizer: AdamState,
    critic_steps: u64,
    actor_steps: u64,
}

impl Gctd3bc {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        cfg: Gctd3bcConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let model = TwinCritics::new(obs_dim, action_low, action_high, &cfg.hidden, rng)?;
        Ok(Self::from_parts(cfg, model))
    }

    pub fn from_parts(cfg: Gctd3bcConfig, model: TwinCritics) -> Self {
        let n = model.critic_spec().param_count();
        let critic_optimizers = [AdamState::new(n, cfg.critic_lr), AdamState::new(n, cfg.critic_lr)];
        let actor_optimizer = AdamState::new(model.actor().spec().param_count(), cfg.actor_lr);
        Self {
            cfg,
            model,
            critic_optimizers,
            actor_optimizer,
            critic_steps: 0,
            actor_steps: 0,
        }
    }

    pub fn model(&self) -> &TwinCritics {
        &self.model
    }

    pub fn config(&self) -> &Gctd3bcConfig {
        &self.cfg
    }

    pub fn critic_steps(&self) -> u64 {
        self.critic_steps
    }

    pub fn actor_steps(&self) -> u64 {
        self.actor_steps
    }
}

impl Agent for Gctd3bc {
    fn name(&self) -> &'static str {
        "gctd3bc"
    }

    fn update(&mut self, batch: &SourcedBatch, weight: f64, rng: &mut dyn RngCore) -> Result<UpdateStats> {
        let arrays = batch.arrays();
        let critic_loss = td3_critic_update(&mut self.model, &mut self.critic_optimizers, &arrays, &self.cfg, rng)?;
        self.critic_steps += 1;
        let mut stats = UpdateStats {
            critic_loss,
            ..UpdateStats::default()
        };
        if self.critic_steps.is_multiple_of(self.cfg.policy_delay as u64) {
            let actor = gctd3bc_policy_update(&mut self.model, &mut self.actor_optimizer, &arrays, weight, &self.cfg)?;
            self.actor_steps += 1;
            stats.penalty = actor.bc_term;
            stats.policy_objective = Some(actor.objective);
        }
        Ok(stats)
    }

    fn explore_action(&self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let actor = self.model.actor();
        let (half, _) = box_affine(actor.action_low(), actor.action_high())?;
        let mut action = actor.act(obs)?;
        for (j, a) in action.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *a = (*a + eps * self.cfg.explore_noise * half[j]).clamp(actor.action_low()[j], actor.action_high()[j]);
        }
        Ok(action)
    }

    fn eval_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.model.actor().act(obs)
    }

    fn policy_snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Deterministic(self.model.actor().clone())
    }
}
