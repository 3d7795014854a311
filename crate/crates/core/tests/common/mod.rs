//! Fixtures and reference oracles shared by the integration tests.
#![allow(dead_code)]

use apl::gcql::QEnsemble;
use apl::nn::{ParameterVector, SquashedGaussianPolicy};
use apl::oorb::{BatchArrays, Source, SourcedBatch, Transition};
use rand::Rng;

pub const OBS: usize = 3;
pub const ACT: usize = 2;
pub const LOW: [f64; ACT] = [-2.0, -1.0];
pub const HIGH: [f64; ACT] = [2.0, 0.5];

pub fn random_transition<R: Rng>(rng: &mut R, obs: usize, act: usize) -> Transition {
    Transition {
        state: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
        action: (0..act)
            .map(|j| rng.random_range(LOW[j % ACT]..HIGH[j % ACT]))
            .collect(),
        reward: rng.random_range(-2.0..0.5),
        next_state: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
        terminal: rng.random_bool(0.25),
    }
}

pub fn random_batch<R: Rng>(rng: &mut R, rows: usize, source: Source) -> SourcedBatch {
    SourcedBatch::new((0..rows).map(|_| random_transition(rng, OBS, ACT)).collect(), source)
}

pub fn arrays<R: Rng>(rng: &mut R, rows: usize) -> BatchArrays {
    random_batch(rng, rows, Source::Offline).arrays()
}

pub fn ensemble<R: Rng>(rng: &mut R, n: usize, hidden: &[usize]) -> QEnsemble {
    QEnsemble::new(OBS, ACT, hidden, n, 2.min(n), rng).unwrap()
}

pub fn policy<R: Rng>(rng: &mut R, hidden: &[usize]) -> SquashedGaussianPolicy {
    SquashedGaussianPolicy::new(OBS, hidden, &LOW, &HIGH, rng).unwrap()
}

/// Central differences of `f` around `params`, step `h`.
pub fn finite_difference<F>(params: &ParameterVector, h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&ParameterVector) -> f64,
{
    let mut p = params.clone();
    (0..params.len())
        .map(|j| {
            let x = p[j];
            p[j] = x + h;
            let up = f(&p);
            p[j] = x - h;
            let down = f(&p);
            p[j] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest entrywise relative error, with magnitudes below `floor` treated as `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Plain-loop evaluation of a dense relu network with identity output, `(out, in)` row-major weights.
pub fn dense_relu(widths: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut offset = 0;
    let layers = widths.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        x = (0..fan_out)
            .map(|o| {
                let z = b[o] + (0..fan_in).map(|i| w[o * fan_in + i] * x[i]).sum::<f64>();
                if l + 1 < layers {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect();
    }
    x
}

/// Scalar critic value `Q(s, a)` through the plain-loop oracle.
pub fn q_oracle(ensemble: &QEnsemble, params: &ParameterVector, s: &[f64], a: &[f64]) -> f64 {
    let input: Vec<f64> = s.iter().chain(a).copied().collect();
    dense_relu(ensemble.spec().layer_widths(), params, &input)[0]
}

pub mod gradient_cases {
    //! One seeded finite-difference comparison per agent loss, on tiny nets and two transitions.

    use super::*;
    use apl::gcql::{
        bellman_loss, cql_penalty_with_actions, critic_loss_gradient, draw_penalty_actions, policy_loss_gradient,
        PenaltyTerm,
    };
    use apl::gctd3bc::{actor_loss_gradient, TwinCritics};
    use apl::nn::standard_normal_matrix;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const STEP: f64 = 1e-5;
    pub const FLOOR: f64 = 1e-6;
    const HIDDEN: [usize; 2] = [5, 4];

    fn setup(seed: u64) -> (ChaCha8Rng, BatchArrays, QEnsemble, SquashedGaussianPolicy) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = arrays(&mut rng, 2);
        let ens = ensemble(&mut rng, 2, &HIDDEN);
        let pol = policy(&mut rng, &HIDDEN);
        (rng, batch, ens, pol)
    }

    fn targets(rng: &mut ChaCha8Rng) -> Array1<f64> {
        Array1::from_shape_fn(2, |_| rng.random_range(-3.0..3.0))
    }

    /// Bellman residual of one critic against fixed targets.
    pub fn bellman(seed: u64) -> f64 {
        let (mut rng, batch, ens, _) = setup(seed);
        let y = targets(&mut rng);
        let analytic = critic_loss_gradient(&ens, 0, &batch, &y, None).unwrap().grads;
        let numeric = finite_difference(ens.critic(0), STEP, |p| {
            let mut e = ens.clone();
            *e.critic_mut(0) = p.clone();
            bellman_loss(&e, 0, &batch, &y).unwrap()
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    /// Bellman residual plus the weighted conservative penalty.
    pub fn penalized(seed: u64) -> f64 {
        let (mut rng, batch, ens, pol) = setup(seed);
        let y = targets(&mut rng);
        let k = rng.random_range(1..=4);
        let actions = draw_penalty_actions(batch.states.view(), &pol, k, &mut rng).unwrap();
        let coefficient = rng.random_range(0.1..2.0);
        let term = PenaltyTerm {
            actions: actions.view(),
            coefficient,
        };
        let analytic = critic_loss_gradient(&ens, 1, &batch, &y, Some(term)).unwrap().grads;
        let numeric = finite_difference(ens.critic(1), STEP, |p| {
            let mut e = ens.clone();
            *e.critic_mut(1) = p.clone();
            bellman_loss(&e, 1, &batch, &y).unwrap()
                + cql_penalty_with_actions(&e, 1, &batch, actions.view(), coefficient).unwrap()
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    /// Entropy-regularized ensemble-mean policy objective at fixed noise.
    pub fn policy_objective(seed: u64) -> f64 {
        let (mut rng, batch, ens, pol) = setup(seed);
        let noise = standard_normal_matrix(2, ACT, &mut rng);
        let alpha = rng.random_range(0.0..1.0);
        let (_, grads) = policy_loss_gradient(&pol, &ens, batch.states.view(), noise.view(), alpha).unwrap();
        // the returned gradient is that of the negated objective
        let analytic: Vec<f64> = grads.iter().map(|g| -g).collect();
        let numeric = finite_difference(pol.params(), STEP, |p| {
            let mut q = pol.clone();
            *q.params_mut() = p.clone();
            policy_loss_gradient(&q, &ens, batch.states.view(), noise.view(), alpha)
                .unwrap()
                .0
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    /// Value term plus weighted behavior cloning for the deterministic actor.
    pub fn actor_objective(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = arrays(&mut rng, 2);
        let model = TwinCritics::new(OBS, &LOW, &HIGH, &HIDDEN, &mut rng).unwrap();
        let lambda = rng.random_range(0.1..3.0);
        let weight = if seed.is_multiple_of(2) {
            1.0
        } else {
            rng.random_range(0.1..2.0)
        };
        let analytic: Vec<f64> = actor_loss_gradient(&model, &batch, lambda, weight)
            .unwrap()
            .grads
            .iter()
            .map(|g| -g)
            .collect();
        let numeric = finite_difference(model.actor().params(), STEP, |p| {
            let mut actor = model.actor().clone();
            *actor.params_mut() = p.clone();
            let m = TwinCritics::from_parts(
                model.critic_spec().clone(),
                [model.critic(0).clone(), model.critic(1).clone()],
                [model.target(0).clone(), model.target(1).clone()],
                actor,
                model.target_actor().clone(),
            )
            .unwrap();
            actor_loss_gradient(&m, &batch, lambda, weight).unwrap().objective
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    pub type Case = (&'static str, fn(u64) -> f64);

    pub const ALL: [Case; 4] = [
        ("bellman", bellman),
        ("penalized critic", penalized),
        ("policy objective", policy_objective),
        ("actor objective", actor_objective),
    ];
}

pub mod oracles {
    //! Independent recomputations of agent quantities through plain scalar loops.

    use super::*;
    use apl::gcql::{redq_target, GcqlConfig};
    use apl::nn::standard_normal_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Every unordered pair out of `n` critics.
    pub fn all_pairs(n: usize) -> Vec<[usize; 2]> {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).collect()
    }

    /// Outcome of one REDQ target comparison.
    pub struct RedqCase {
        pub max_abs_error: f64,
        pub bounds_hold: bool,
    }

    /// Computes the in-target minimum for all ten pairs of a five-critic ensemble, picks the
    /// pair the seeded draw selects, and compares with the library target.
    pub fn redq_case(seed: u64) -> RedqCase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(1..6);
        let batch = arrays(&mut rng, rows);
        let mut ens = ensemble(&mut rng, 5, &[6, 5]);
        // targets that differ from the online critics
        for i in 0..5 {
            let t = ens.target(i).iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            *ens.target_mut(i) = ParameterVector::from_vec(t);
        }
        let pol = policy(&mut rng, &[6, 5]);
        let cfg = GcqlConfig {
            gamma: rng.random_range(0.5..0.999),
            ..GcqlConfig::default()
        };
        let stream = rng.clone();
        let y = redq_target(&batch, &ens, &pol, &cfg, &mut rng).unwrap();

        // replay the stream: one pair draw, then one noise row per transition
        let mut replay = stream;
        let mut drawn = rand::seq::index::sample(&mut replay, 5, 2).into_vec();
        drawn.sort_unstable();
        let noise = standard_normal_matrix(rows, ACT, &mut replay);

        let mut max_abs_error: f64 = 0.0;
        let mut bounds_hold = true;
        for b in 0..rows {
            let s2 = batch.next_states.row(b).to_vec();
            let a2 = pol.act_with_noise(&s2, noise.row(b).as_slice().unwrap()).unwrap().0;
            let q: Vec<f64> = (0..5).map(|i| q_oracle(&ens, ens.target(i), &s2, &a2)).collect();
            let mask = 1.0 - batch.terminals[b];
            let r = batch.rewards[b];
            let candidates: Vec<([usize; 2], f64)> = all_pairs(5)
                .into_iter()
                .map(|[i, j]| ([i, j], r + cfg.gamma * mask * q[i].min(q[j])))
                .collect();
            let expected = candidates.iter().find(|(p, _)| p[..] == drawn[..]).unwrap().1;
            max_abs_error = max_abs_error.max((expected - y[b]).abs());
            let lo = r + cfg.gamma * mask * q.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r + cfg.gamma * mask * q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            bounds_hold &= lo - 1e-12 <= y[b] && y[b] <= hi + 1e-12;
        }
        RedqCase {
            max_abs_error,
            bounds_hold,
        }
    }

    /// Sets a critic to the constant function `c`.
    pub fn make_constant(params: &mut ParameterVector, c: f64) {
        params.iter_mut().for_each(|v| *v = 0.0);
        let last = params.len() - 1;
        params[last] = c;
    }

    /// `mean_s [log-mean-exp_k Q(s, a'_k) - Q(s, a)]` by direct scalar evaluation.
    pub fn penalty_oracle(
        ens: &QEnsemble,
        i: usize,
        batch: &BatchArrays,
        sample_actions: &ndarray::Array2<f64>,
    ) -> f64 {
        let rows = batch.states.nrows();
        let k = sample_actions.nrows() / rows;
        let mut total = 0.0;
        for b in 0..rows {
            let s = batch.states.row(b).to_vec();
            let qs: Vec<f64> = (0..k)
                .map(|j| {
                    q_oracle(
                        ens,
                        ens.critic(i),
                        &s,
                        sample_actions.row(b * k + j).as_slice().unwrap(),
                    )
                })
                .collect();
            let m = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lme = m + (qs.iter().map(|q| (q - m).exp()).sum::<f64>() / k as f64).ln();
            total += lme - q_oracle(ens, ens.critic(i), &s, batch.actions.row(b).as_slice().unwrap());
        }
        total / rows as f64
    }
}

pub mod buffers {
    use apl::oorb::{Oorb, OorbConfig, Source, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Transition tagged by `id` in its first state coordinate.
    pub fn tagged(id: usize) -> Transition {
        Transition {
            state: vec![id as f64, 0.0],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![id as f64, 1.0],
            terminal: false,
        }
    }

    /// Buffer with `offline` dataset transitions and a full online buffer.
    pub fn filled(p: f64, capacity: usize, batch: usize, offline: usize) -> Oorb {
        let mut b = Oorb::new(
            OorbConfig {
                p,
                starting_size: 1000,
                online_capacity: capacity,
                offline_capacity: 300_000,
                batch_size: batch,
            },
            2,
            1,
        )
        .unwrap();
        b.load_offline(&(0..offline).map(|i| tagged(1_000_000 + i)).collect::<Vec<_>>())
            .unwrap();
        for i in 0..capacity {
            b.push_online(tagged(i)).unwrap();
        }
        b
    }

    /// Number of online-sourced batches among `calls` samples at step count `s_on`.
    pub fn online_count(buffer: &Oorb, s_on: usize, calls: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..calls)
            .filter(|_| buffer.sample(s_on, &mut rng).unwrap().source == Source::Online)
            .count()
    }

    /// Pushes `pushes` tagged transitions into a capacity-`capacity` buffer and checks that the
    /// online buffer holds exactly the most recent ones, oldest first.
    pub fn fifo_exact(capacity: usize, pushes: usize) -> bool {
        let mut b = Oorb::new(
            OorbConfig {
                p: 0.5,
                starting_size: 0,
                online_capacity: capacity,
                offline_capacity: 300_000,
                batch_size: 1,
            },
            2,
            1,
        )
        .unwrap();
        for i in 0..pushes {
            b.push_online(tagged(i)).unwrap();
            let kept: Vec<usize> = b.online().map(|t| t.state[0] as usize).collect();
            let start = (i + 1).saturating_sub(capacity);
            if kept != (start..=i).collect::<Vec<_>>() {
                return false;
            }
        }
        b.offline_len() == pushes
    }
}

pub mod tiers {
    use apl::dataio::{episode_returns, generate_dataset, Tier};
    use apl::envs::EnvKind;

    pub struct TierStats {
        pub tier: Tier,
        pub mean: f64,
        pub standard_error: f64,
        pub episodes: usize,
    }

    /// Mean and standard error of episode returns in a generated dataset of `episodes` full episodes.
    pub fn dataset_stats(env: EnvKind, tier: Tier, episodes: usize, seed: u64) -> TierStats {
        let horizon = env.spec().max_episode_steps;
        let data = generate_dataset(env, tier, episodes * horizon, seed).unwrap();
        let returns = episode_returns(&data.records, horizon);
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        TierStats {
            tier,
            mean,
            standard_error: (var / n).sqrt(),
            episodes: returns.len(),
        }
    }

    /// Whether consecutive tiers increase by more than `k` combined standard errors.
    pub fn strictly_ordered(stats: &[TierStats], k: f64) -> bool {
        stats.windows(2).all(|w| {
            let se = (w[0].standard_error.powi(2) + w[1].standard_error.powi(2)).sqrt();
            w[1].mean - w[0].mean > k * se
        })
    }
}
