//! Tanh-squashed Gaussian policy head.
//!
//! The trunk maps a state to `2 * act_dim` values: the pre-squash mean
//! followed by the log standard deviation. A draw is
//! `a = offset + scale * tanh(mean + exp(log_std) * noise)` and its
//! log-density carries the tanh and scale change-of-variables terms.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{backward, forward_batch, mlp_forward, Activation, MlpSpec, ParameterVector, Tape};
use crate::error::{Error, Result};

pub const DEFAULT_LOG_STD_BOUNDS: (f64, f64) = (-20.0, 2.0);

/// Largest |tanh| emitted, so actions stay strictly inside the box.
const MAX_SQUASH: f64 = 1.0 - 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashedGaussianPolicy {
    spec: MlpSpec,
    params: ParameterVector,
    log_std_bounds: (f64, f64),
    action_scale: Vec<f64>,
    action_offset: Vec<f64>,
}

/// `log(1 - tanh(u)^2)`, stable for large |u|.
#[inline]
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Batch of reparameterized draws with everything needed for the backward pass.
#[derive(Debug, Clone)]
pub struct PolicyBatch {
    tape: Tape,
    noise: Array2<f64>,
    pre_squash: Array2<f64>,
    squashed: Array2<f64>,
    std: Array2<f64>,
    log_std_active: Array2<bool>,
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        action_low: &[f64],
        action_high: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let act_dim = action_low.len();
        let spec = MlpSpec::with_hidden(state_dim, hidden, 2 * act_dim, Activation::Relu, Activation::Identity)?;
        let params = spec.init_params(rng);
        let (scale, offset) = box_affine(action_low, action_high)?;
        Self::from_parts(spec, params, DEFAULT_LOG_STD_BOUNDS, scale, offset)
    }

    pub fn from_parts(
        spec: MlpSpec,
        params: ParameterVector,
        log_std_bounds: (f64, f64),
        action_scale: Vec<f64>,
        action_offset: Vec<f64>,
    ) -> Result<Self> {
        spec.check_params(&params)?;
        let act_dim = action_scale.len();
        if spec.output_dim() != 2 * act_dim || action_offset.len() != act_dim {
            return Err(Error::DimensionMismatch {
                context: "policy trunk output",
                expected: 2 * act_dim,
                actual: spec.output_dim(),
            });
        }
        if !(log_std_bounds.0 < log_std_bounds.1) {
            return Err(Error::InvalidConfig("log-std bounds must be increasing".into()));
        }
        if action_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig("action scale must be positive".into()));
        }
        Ok(Self {
            spec,
            params,
            log_std_bounds,
            action_scale,
            action_offset,
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

    pub fn act_dim(&self) -> usize {
        self.action_scale.len()
    }

    pub fn state_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn log_std_bounds(&self) -> (f64, f64) {
        self.log_std_bounds
    }

    /// Draws (or takes the mean) action at `state`, with its log-density.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], mode: ActionMode, rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let noise: Vec<f64> = match mode {
            ActionMode::Mean => vec![0.0; self.act_dim()],
            ActionMode::Sample => (0..self.act_dim()).map(|_| rng.sample(StandardNormal)).collect(),
        };
        self.act_with_noise(state, &noise)
    }

    /// Single-state evaluation with caller-supplied standard-normal noise.
    pub fn act_with_noise(&self, state: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.act_dim();
        if noise.len() != n {
            return Err(Error::DimensionMismatch {
                context: "policy noise",
                expected: n,
                actual: noise.len(),
            });
        }
        let raw = mlp_forward(&self.spec, &self.params, state)?;
        let (lo, hi) = self.log_std_bounds;
        let mut action = Vec::with_capacity(n);
        let mut log_prob = 0.0;
        for j in 0..n {
            let log_std = raw[n + j].clamp(lo, hi);
            let u = raw[j] + log_std.exp() * noise[j];
            let t = u.tanh().clamp(-MAX_SQUASH, MAX_SQUASH);
            action.push(self.action_offset[j] + self.action_scale[j] * t);
            log_prob += -0.5 * noise[j] * noise[j]
                - log_std
                - HALF_LN_2PI
                - log_one_minus_tanh_sq(u)
                - self.action_scale[j].ln();
        }
        Ok((action, log_prob))
    }

    /// Reparameterized draws for every row of `states` using the given noise rows.
    pub fn sample_batch(&self, states: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<PolicyBatch> {
        let n = self.act_dim();
        if noise.dim() != (states.nrows(), n) {
            return Err(Error::DimensionMismatch {
                context: "policy noise",
                expected: states.nrows() * n,
                actual: noise.len(),
            });
        }
        let tape = forward_batch(&self.spec, &self.params, states)?;
        let raw = tape.output();
        let (lo, hi) = self.log_std_bounds;
        let mean = raw.slice(s![.., ..n]);
        let raw_log_std = raw.slice(s![.., n..]);
        let log_std_active = raw_log_std.mapv(|v| v >= lo && v <= hi);
        let log_std = raw_log_std.mapv(|v| v.clamp(lo, hi));
        let std = log_std.mapv(f64::exp);
        let pre_squash = &mean + &(&std * &noise);
        let squashed = pre_squash.mapv(|u| u.tanh().clamp(-MAX_SQUASH, MAX_SQUASH));
        let scale = ArrayView1::from(&self.action_scale);
        let offset = ArrayView1::from(&self.action_offset);
        let actions = &squashed * &scale + offset;
        let log_scale_sum: f64 = self.action_scale.iter().map(|s| s.ln()).sum();
        let mut log_probs = Array1::zeros(states.nrows());
        for (b, lp) in log_probs.iter_mut().enumerate() {
            let mut acc = -log_scale_sum - HALF_LN_2PI * n as f64;
            for j in 0..n {
                let e = noise[[b, j]];
                acc += -0.5 * e * e - log_std[[b, j]] - log_one_minus_tanh_sq(pre_squash[[b, j]]);
            }
            *lp = acc;
        }
        Ok(PolicyBatch {
            tape,
            noise: noise.to_owned(),
            pre_squash,
            squashed,
            std,
            log_std_active,
            actions,
            log_probs,
        })
    }

    /// Parameter gradient of a loss given dL/d actions and dL/d log-probs.
    pub fn backward_batch(
        &self,
        batch: &PolicyBatch,
        d_actions: ArrayView2<'_, f64>,
        d_log_probs: ArrayView1<'_, f64>,
    ) -> Result<Vec<f64>> {
        let n = self.act_dim();
        let rows = batch.actions.nrows();
        if d_actions.dim() != (rows, n) || d_log_probs.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "policy output gradient",
                expected: rows * n,
                actual: d_actions.len(),
            });
        }
        let mut d_raw = Array2::zeros((rows, 2 * n));
        for b in 0..rows {
            let dlp = d_log_probs[b];
            for j in 0..n {
                let u = batch.pre_squash[[b, j]];
                let t = batch.squashed[[b, j]];
                // d log_prob / du = 2 tanh(u) from the squash correction
                let du = d_actions[[b, j]] * self.action_scale[j] * (1.0 - t * t) + dlp * 2.0 * u.tanh();
                d_raw[[b, j]] = du;
                if batch.log_std_active[[b, j]] {
                    d_raw[[b, n + j]] = du * batch.std[[b, j]] * batch.noise[[b, j]] - dlp;
                }
            }
        }
        let (grads, _) = backward(&self.spec, &self.params, &batch.tape, d_raw.view())?;
        Ok(grads)
    }

    /// Deterministic mean actions for a batch of states.
    pub fn mean_actions(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let zeros = Array2::zeros((states.nrows(), self.act_dim()));
        Ok(self.sample_batch(states, zeros.view())?.actions)
    }
}

impl PolicyBatch {
    pub fn len(&self) -> usize {
        self.actions.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-dimension `(scale, offset)` mapping `[-1, 1]` onto `[low, high]`.
pub fn box_affine(low: &[f64], high: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if low.len() != high.len() {
        return Err(Error::DimensionMismatch {
            context: "action bounds",
            expected: low.len(),
            actual: high.len(),
        });
    }
    if low.iter().zip(high).any(|(l, h)| !(l < h)) {
        return Err(Error::InvalidConfig("action_low must be < action_high".into()));
    }
    let scale = low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).collect();
    let offset = low.iter().zip(high).map(|(l, h)| 0.5 * (h + l)).collect();
    Ok((scale, offset))
}

/// Fills a `(rows, cols)` matrix with standard-normal draws in row-major order.
pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_d_policy(mean: f64, log_std: f64, scale: f64, offset: f64) -> SquashedGaussianPolicy {
        // 1-input trunk with zero weights: outputs are exactly the biases
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu, Activation::Identity).unwrap();
        let params = ParameterVector::from_vec(vec![0.0, 0.0, mean, log_std]);
        SquashedGaussianPolicy::from_parts(spec, params, DEFAULT_LOG_STD_BOUNDS, vec![scale], vec![offset]).unwrap()
    }

    #[test]
    fn zero_mean_gives_offset() {
        let policy = one_d_policy(0.0, 0.3, 2.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, lp) = policy.act(&[1.0], ActionMode::Mean, &mut rng).unwrap();
        assert_eq!(a, vec![0.5]);
        assert!(lp.is_finite());
    }

    #[test]
    fn lower_bound_log_std_collapses_to_mean() {
        let policy = one_d_policy(0.4, -50.0, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mean_action, _) = policy.act(&[0.0], ActionMode::Mean, &mut rng).unwrap();
        for _ in 0..100 {
            let (a, lp) = policy.act(&[0.0], ActionMode::Sample, &mut rng).unwrap();
            assert!((a[0] - mean_action[0]).abs() < 1e-7);
            // density near the point mass grows without bound; clamped at exp(-20) it is huge
            assert!(lp > 15.0);
        }
    }

    #[test]
    fn batch_and_single_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = SquashedGaussianPolicy::new(3, &[8, 8], &[-2.0, -1.0], &[2.0, 1.0], &mut rng).unwrap();
        let states = standard_normal_matrix(6, 3, &mut rng);
        let noise = standard_normal_matrix(6, 2, &mut rng);
        let batch = policy.sample_batch(states.view(), noise.view()).unwrap();
        for b in 0..6 {
            let (a, lp) = policy
                .act_with_noise(states.row(b).as_slice().unwrap(), noise.row(b).as_slice().unwrap())
                .unwrap();
            assert!((lp - batch.log_probs[b]).abs() < 1e-10);
            for (j, aj) in a.iter().enumerate() {
                assert!((aj - batch.actions[[b, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_draws_stay_inside_box_with_finite_density() {
        let policy = one_d_policy(40.0, 2.0, 2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (a, lp) = policy.act(&[0.0], ActionMode::Sample, &mut rng).unwrap();
            assert!(a[0] < 2.0 && a[0] > -2.0);
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn log_prob_matches_histogram_density_at_mode() {
        let (mean, log_std, scale, offset) = (0.3, -0.4, 2.0, 0.0);
        let policy = one_d_policy(mean, log_std, scale, offset);
        // mode located on a fine grid of the analytic density
        let density = |a: f64| {
            let t: f64 = (a - offset) / scale;
            let u = t.atanh();
            let sigma = f64::exp(log_std);
            let z = (u - mean) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()) / (scale * (1.0 - t * t))
        };
        let mode = (1..4000)
            .map(|i| -2.0 + 4.0 * i as f64 / 4000.0)
            .max_by(|a, b| density(*a).partial_cmp(&density(*b)).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let half_width = 0.01;
        let n = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let (a, _) = policy.act(&[0.0], ActionMode::Sample, &mut rng).unwrap();
            if (a[0] - mode).abs() < half_width {
                hits += 1;
            }
        }
        let empirical = hits as f64 / (n as f64 * 2.0 * half_width);
        let (_, lp) = policy
            .act_with_noise(&[0.0], &[((mode / scale).atanh() - mean) / log_std.exp()])
            .unwrap();
        let rel = (lp.exp() - empirical).abs() / empirical;
        assert!(rel < 0.02, "analytic {} vs histogram {empirical}", lp.exp());
    }
}
