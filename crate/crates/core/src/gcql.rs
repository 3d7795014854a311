//! Greedy-conservative Q-ensemble learning.
//!
//! Critics regress onto `r + γ (1 - terminal) min_{i ∈ M} Q̂_i(s', a')` for a
//! random subset `M` of the target ensemble, plus a conservative penalty
//! `log-mean-exp_k Q_i(s, a'_k) - Q_i(s, a)` over policy samples that is
//! scaled by the batch weight. The policy maximizes the ensemble-mean Q minus
//! an entropy cost.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{critic_inputs, Agent, PolicySnapshot, UpdateStats};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward_batch, input_gradient, loss, polyak_update, standard_normal_matrix, ActionMode,
    Activation, AdamState, MlpSpec, ParameterVector, SquashedGaussianPolicy,
};
use crate::oorb::{BatchArrays, SourcedBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcqlConfig {
    pub gamma: f64,
    /// Coefficient of the conservative penalty.
    pub alpha_cql: f64,
    /// Entropy coefficient in the policy objective.
    pub alpha_ent: f64,
    /// Policy samples per state in the penalty (K).
    pub n_penalty_samples: usize,
    pub tau: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub n_critics: usize,
    pub subset_size: usize,
    /// Draw a fresh target subset for every transition instead of once per batch.
    pub per_transition_subset: bool,
    pub hidden: Vec<usize>,
}

impl Default for GcqlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha_cql: 1.0,
            alpha_ent: 0.2,
            n_penalty_samples: 10,
            tau: 0.005,
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            n_critics: 5,
            subset_size: 2,
            per_transition_subset: false,
            hidden: vec![64, 64],
        }
    }
}

impl GcqlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.alpha_cql >= 0.0) || !(self.alpha_ent >= 0.0) {
            return bad("alpha_cql and alpha_ent must be non-negative");
        }
        if self.n_penalty_samples == 0 {
            return bad("n_penalty_samples must be >= 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.critic_lr > 0.0) || !(self.actor_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.n_critics == 0 || self.subset_size == 0 || self.subset_size > self.n_critics {
            return bad("need 1 <= subset_size <= n_critics");
        }
        Ok(())
    }
}

/// N critics over `state ‖ action` with matching target copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEnsemble {
    spec: MlpSpec,
    critics: Vec<ParameterVector>,
    targets: Vec<ParameterVector>,
    subset_size: usize,
}

impl QEnsemble {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        n_critics: usize,
        subset_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(obs_dim + act_dim, hidden, 1, Activation::Relu, Activation::Identity)?;
        let critics: Vec<_> = (0..n_critics).map(|_| spec.init_params(rng)).collect();
        let targets = critics.clone();
        Self::from_parts(spec, critics, targets, subset_size)
    }

    pub fn from_parts(
        spec: MlpSpec,
        critics: Vec<ParameterVector>,
        targets: Vec<ParameterVector>,
        subset_size: usize,
    ) -> Result<Self> {
        if spec.output_dim() != 1 {
            return Err(Error::InvalidConfig("critics must output one value".into()));
        }
        if critics.is_empty() || critics.len() != targets.len() {
            return Err(Error::InvalidConfig(
                "need a non-empty ensemble with one target per critic".into(),
            ));
        }
        if subset_size == 0 || subset_size > critics.len() {
            return Err(Error::InvalidConfig("need 1 <= subset_size <= N".into()));
        }
        for p in critics.iter().chain(&targets) {
            spec.check_params(p)?;
        }
        Ok(Self {
            spec,
            critics,
            targets,
            subset_size,
        })
    }

    pub fn len(&self) -> usize {
        self.critics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.critics.is_empty()
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn critic(&self, i: usize) -> &ParameterVector {
        &self.critics[i]
    }

    pub fn critic_mut(&mut self, i: usize) -> &mut ParameterVector {
        &mut self.critics[i]
    }

    pub fn target(&self, i: usize) -> &ParameterVector {
        &self.targets[i]
    }

    pub fn target_mut(&mut self, i: usize) -> &mut ParameterVector {
        &mut self.targets[i]
    }

    /// Critic `i` on each `state ‖ action` row.
    pub fn q_values(&self, i: usize, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(forward_batch(&self.spec, &self.critics[i], inputs)?
            .output()
            .column(0)
            .to_owned())
    }

    pub fn target_values(&self, i: usize, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(forward_batch(&self.spec, &self.targets[i], inputs)?
            .output()
            .column(0)
            .to_owned())
    }
}

/// Uniform draw of `k` distinct critic indices out of `n`.
pub fn draw_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Bootstrap targets `r + γ (1 - terminal) min_{i ∈ M} Q̂_i(s', a')`, `a' ~ π(·|s')`.
///
/// Consumes the rng in a fixed order: the subset draw(s), then one noise row per transition.
pub fn redq_target<R: Rng + ?Sized>(
    batch: &BatchArrays,
    ensemble: &QEnsemble,
    policy: &SquashedGaussianPolicy,
    cfg: &GcqlConfig,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let rows = batch.rewards.len();
    let n = ensemble.len();
    let k = ensemble.subset_size();
    let subsets: Vec<Vec<usize>> = if cfg.per_transition_subset {
        (0..rows).map(|_| draw_subset(n, k, rng)).collect()
    } else {
        vec![draw_subset(n, k, rng)]
    };
    let noise = standard_normal_matrix(rows, policy.act_dim(), rng);
    let next_actions = policy.sample_batch(batch.next_states.view(), noise.view())?.actions;
    let inputs = critic_inputs(batch.next_states.view(), next_actions.view());

    let mut needed = vec![false; n];
    for subset in &subsets {
        for &i in subset {
            needed[i] = true;
        }
    }
    let values: Vec<Option<Array1<f64>>> = (0..n)
        .map(|i| needed[i].then(|| ensemble.target_values(i, inputs.view())).transpose())
        .collect::<Result<_>>()?;

    let mut y = Array1::zeros(rows);
    for b in 0..rows {
        let subset = if cfg.per_transition_subset {
            &subsets[b]
        } else {
            &subsets[0]
        };
        let min_q = subset
            .iter()
            .map(|&i| values[i].as_ref().unwrap()[b])
            .fold(f64::INFINITY, f64::min);
        y[b] = batch.rewards[b] + cfg.gamma * (1.0 - batch.terminals[b]) * min_q;
    }
    Ok(y)
}

/// Mean squared residual of critic `i` against fixed targets `y`.
pub fn bellman_loss(ensemble: &QEnsemble, i: usize, batch: &BatchArrays, y: &Array1<f64>) -> Result<f64> {
    let q = ensemble.q_values(i, critic_inputs(batch.states.view(), batch.actions.view()).view())?;
    Ok(loss::mean_squared_error(q.as_slice().unwrap(), y.as_slice().unwrap()).0)
}

/// `K` policy draws per state; row `b * K + k` belongs to state `b`.
pub fn draw_penalty_actions<R: Rng + ?Sized>(
    states: ArrayView2<'_, f64>,
    policy: &SquashedGaussianPolicy,
    samples_per_state: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let repeated = repeat_rows(states, samples_per_state);
    let noise = standard_normal_matrix(repeated.nrows(), policy.act_dim(), rng);
    Ok(policy.sample_batch(repeated.view(), noise.view())?.actions)
}

fn repeat_rows(states: ArrayView2<'_, f64>, times: usize) -> Array2<f64> {
    let mut out = Array2::zeros((states.nrows() * times, states.ncols()));
    for (b, row) in states.rows().into_iter().enumerate() {
        for k in 0..times {
            out.row_mut(b * times + k).assign(&row);
        }
    }
    out
}

/// `alpha_cql * mean_s [log-mean-exp_k Q_i(s, a'_k) - Q_i(s, a)]` for given policy draws.
pub fn cql_penalty_with_actions(
    ensemble: &QEnsemble,
    i: usize,
    batch: &BatchArrays,
    penalty_actions: ArrayView2<'_, f64>,
    alpha_cql: f64,
) -> Result<f64> {
    let rows = batch.states.nrows();
    let k = penalty_actions.nrows() / rows;
    let data_q = ensemble.q_values(i, critic_inputs(batch.states.view(), batch.actions.view()).view())?;
    let sample_inputs = critic_inputs(repeat_rows(batch.states.view(), k).view(), penalty_actions);
    let sample_q = ensemble.q_values(i, sample_inputs.view())?;
    let mut total = 0.0;
    for b in 0..rows {
        let (lme, _) = loss::log_mean_exp(&sample_q.as_slice().unwrap()[b * k..(b + 1) * k]);
        total += lme - data_q[b];
    }
    Ok(alpha_cql * total / rows as f64)
}

/// Conservative penalty for critic `i`, drawing `K` fresh policy actions per state.
pub fn cql_penalty<R: Rng + ?Sized>(
    ensemble: &QEnsemble,
    i: usize,
    batch: &BatchArrays,
    policy: &SquashedGaussianPolicy,
    cfg: &GcqlConfig,
    rng: &mut R,
) -> Result<f64> {
    let actions = draw_penalty_actions(batch.states.view(), policy, cfg.n_penalty_samples, rng)?;
    cql_penalty_with_actions(ensemble, i, batch, actions.view(), cfg.alpha_cql)
}

/// Loss terms and parameter gradient of `bellman + weight * penalty` for one critic.
#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub bellman: f64,
    /// `mean_s [log-mean-exp_k Q(s, a'_k) - Q(s, a)]` before any coefficient, if evaluated.
    pub penalty: Option<f64>,
    pub total: f64,
    pub grads: Vec<f64>,
}

/// Penalty inputs for [`critic_loss_gradient`]: policy draws and the effective coefficient.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyTerm<'a> {
    pub actions: ArrayView2<'a, f64>,
    /// `weight * alpha_cql`.
    pub coefficient: f64,
}

/// Exact gradient of the critic objective at fixed targets `y`.
///
/// With `penalty = None` the penalty is neither evaluated nor differentiated.
pub fn critic_loss_gradient(
    ensemble: &QEnsemble,
    i: usize,
    batch: &BatchArrays,
    y: &Array1<f64>,
    penalty: Option<PenaltyTerm<'_>>,
) -> Result<CriticLoss> {
    let rows = batch.states.nrows();
    let data_inputs = critic_inputs(batch.states.view(), batch.actions.view());
    let (inputs, k) = match &penalty {
        Some(term) => {
            let k = term.actions.nrows() / rows;
            let samples = critic_inputs(repeat_rows(batch.states.view(), k).view(), term.actions);
            (ndarray::concatenate![Axis(0), data_inputs, samples], k)
        }
        None => (data_inputs, 0),
    };
    let spec = ensemble.spec();
    let params = ensemble.critic(i);
    let tape = forward_batch(spec, params, inputs.view())?;
    let q = tape.output().column(0).to_owned();
    let data_q = q.slice(s![..rows]);
    let (bellman, data_grad) = loss::mean_squared_error(data_q.as_slice().unwrap(), y.as_slice().unwrap());
    let mut d_out = Array2::zeros((inputs.nrows(), 1));
    for (b, g) in data_grad.into_iter().enumerate() {
        d_out[[b, 0]] = g;
    }
    let mut penalty_value = None;
    let mut total = bellman;
    if let Some(term) = penalty {
        let scale = term.coefficient / rows as f64;
        let sample_q = q.slice(s![rows..]);
        let sample_q = sample_q.as_slice().unwrap();
        let mut sum = 0.0;
        for b in 0..rows {
            let (lme, weights) = loss::log_mean_exp(&sample_q[b * k..(b + 1) * k]);
            sum += lme - data_q[b];
            d_out[[b, 0]] -= scale;
            for (j, w) in weights.into_iter().enumerate() {
                d_out[[rows + b * k + j, 0]] += scale * w;
            }
        }
        let value = sum / rows as f64;
        total += term.coefficient * value;
        penalty_value = Some(value);
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss { critic: i });
    }
    let (grads, _) = backward(spec, params, &tape, d_out.view())?;
    Ok(CriticLoss {
        bellman,
        penalty: penalty_value,
        total,
        grads,
    })
}

/// Result of one ensemble step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QUpdateStats {
    pub mean_bellman: f64,
    /// Mean over critics of `alpha_cql * penalty`, if the penalty was active.
    pub mean_penalty: Option<f64>,
}

/// One Adam step per critic on `bellman + weight * penalty`, then Polyak targets.
///
/// A zero effective coefficient (`weight * alpha_cql == 0`) skips the penalty and its
/// policy draws entirely.
pub fn q_update<R: Rng + ?Sized>(
    ensemble: &mut QEnsemble,
    optimizers: &mut [AdamState],
    batch: &BatchArrays,
    weight: f64,
    policy: &SquashedGaussianPolicy,
    cfg: &GcqlConfig,
    rng: &mut R,
) -> Result<QUpdateStats> {
    let y = redq_target(batch, ensemble, policy, cfg, rng)?;
    let coefficient = weight * cfg.alpha_cql;
    let penalty_actions = if coefficient != 0.0 {
        Some(draw_penalty_actions(
            batch.states.view(),
            policy,
            cfg.n_penalty_samples,
            rng,
        )?)
    } else {
        None
    };
    let losses = (0..ensemble.len())
        .map(|i| {
            let term = penalty_actions.as_ref().map(|a| PenaltyTerm {
                actions: a.view(),
                coefficient,
            });
            critic_loss_gradient(ensemble, i, batch, &y, term)
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, l) in losses.iter().enumerate() {
        adam_step(&mut ensemble.critics[i], &l.grads, &mut optimizers[i])?;
    }
    for i in 0..ensemble.len() {
        let QEnsemble { critics, targets, .. } = &mut *ensemble;
        polyak_update(&mut targets[i], &critics[i], cfg.tau)?;
    }
    let n = losses.len() as f64;
    Ok(QUpdateStats {
        mean_bellman: losses.iter().map(|l| l.bellman).sum::<f64>() / n,
        mean_penalty: penalty_actions
            .as_ref()
            .map(|_| losses.iter().map(|l| cfg.alpha_cql * l.penalty.unwrap()).sum::<f64>() / n),
    })
}

/// Policy objective `mean_b [ mean_i Q_i(s, ã) - alpha_ent log π(ã|s) ]` for the given noise,
/// and the gradient of its negation with respect to the policy parameters.
pub fn policy_loss_gradient(
    policy: &SquashedGaussianPolicy,
    ensemble: &QEnsemble,
    states: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    alpha_ent: f64,
) -> Result<(f64, Vec<f64>)> {
    let rows = states.nrows();
    let act_dim = policy.act_dim();
    let obs_dim = states.ncols();
    let draws = policy.sample_batch(states, noise)?;
    let inputs = critic_inputs(states, draws.actions.view());
    let n = ensemble.len() as f64;
    let d_q = Array2::from_elem((rows, 1), 1.0 / (n * rows as f64));
    let mut mean_q = 0.0;
    let mut d_actions = Array2::<f64>::zeros((rows, act_dim));
    for i in 0..ensemble.len() {
        let tape = forward_batch(ensemble.spec(), ensemble.critic(i), inputs.view())?;
        mean_q += tape.output().sum() / (n * rows as f64);
        let d_in = input_gradient(ensemble.spec(), ensemble.critic(i), &tape, d_q.view())?;
        d_actions -= &d_in.slice(s![.., obs_dim..]);
    }
    let objective = mean_q - alpha_ent * draws.log_probs.mean().unwrap_or(0.0);
    let d_log_probs = Array1::from_elem(rows, alpha_ent / rows as f64);
    let grads = policy.backward_batch(&draws, d_actions.view(), d_log_probs.view())?;
    Ok((objective, grads))
}

/// One reparameterized ascent step on the policy objective; critics are read only.
pub fn gcql_policy_update<R: Rng + ?Sized>(
    policy: &mut SquashedGaussianPolicy,
    optimizer: &mut AdamState,
    ensemble: &QEnsemble,
    states: ArrayView2<'_, f64>,
    cfg: &GcqlConfig,
    rng: &mut R,
) -> Result<f64> {
    if states.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let noise = standard_normal_matrix(states.nrows(), policy.act_dim(), rng);
    let (objective, grads) = policy_loss_gradient(policy, ensemble, states, noise.view(), cfg.alpha_ent)?;
    adam_step(policy.params_mut(), &grads, optimizer)?;
    Ok(objective)
}

/// GCQL agent: ensemble, policy and their optimizers.
#[derive(Debug, Clone)]
pub struct Gcql {
    cfg: GcqlConfig,
    ensemble: QEnsemble,
    policy: SquashedGaussianPolicy,
    critic_optimizers: Vec<AdamState>,
    policy_optimizer: AdamState,
}

impl Gcql {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        cfg: GcqlConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let ensemble = QEnsemble::new(
            obs_dim,
            action_low.len(),
            &cfg.hidden,
            cfg.n_critics,
            cfg.subset_size,
            rng,
        )?;
        let policy = SquashedGaussianPolicy::new(obs_dim, &cfg.hidden, action_low, action_high, rng)?;
        Ok(Self::from_parts(cfg, ensemble, policy))
    }

    pub fn from_parts(cfg: GcqlConfig, ensemble: QEnsemble, policy: SquashedGaussianPolicy) -> Self {
        let critic_optimizers = (0..ensemble.len())
            .map(|_| AdamState::new(ensemble.spec().param_count(), cfg.critic_lr))
            .collect();
        let policy_optimizer = AdamState::new(policy.spec().param_count(), cfg.actor_lr);
        Self {
            cfg,
            ensemble,
            policy,
            critic_optimizers,
            policy_optimizer,
        }
    }

    pub fn config(&self) -> &GcqlConfig {
        &self.cfg
    }

    pub fn ensemble(&self) -> &QEnsemble {
        &self.ensemble
    }

    pub fn policy(&self) -> &SquashedGaussianPolicy {
        &self.policy
    }
}

impl Agent for Gcql {
    fn name(&self) -> &'static str {
        "gcql"
    }

    fn update(&mut self, batch: &SourcedBatch, weight: f64, rng: &mut dyn RngCore) -> Result<UpdateStats> {
        let arrays = batch.arrays();
        let q = q_update(
            &mut self.ensemble,
            &mut self.critic_optimizers,
            &arrays,
            weight,
            &self.policy,
            &self.cfg,
            rng,
        )?;
        let objective = gcql_policy_update(
            &mut self.policy,
            &mut self.policy_optimizer,
            &self.ensemble,
            arrays.states.view(),
            &self.cfg,
            rng,
        )?;
        Ok(UpdateStats {
            critic_loss: q.mean_bellman,
            penalty: q.mean_penalty,
            policy_objective: Some(objective),
        })
    }

    fn explore_action(&self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.policy.act(obs, ActionMode::Sample, rng)?.0)
    }

    fn eval_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.policy.act_with_noise(obs, &vec![0.0; self.policy.act_dim()])?.0)
    }

    fn policy_snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::SquashedGaussian(self.policy.clone())
    }
}
