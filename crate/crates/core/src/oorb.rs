//! Online-offline replay buffer.
//!
//! A small FIFO buffer holds recent near-on-policy interaction data; a large
//! buffer holds the offline dataset plus everything collected online. Each
//! batch comes entirely from one of them, chosen by a Bernoulli draw once the
//! warm-up threshold on online steps has been passed.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True termination only; time-limit truncation is stored as `false`.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Online,
    Offline,
}

/// Weight on the pessimistic term: zero for online batches, one otherwise.
pub fn weight_for(source: Source) -> f64 {
    match source {
        Source::Online => 0.0,
        Source::Offline => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OorbConfig {
    /// Probability of drawing an online batch once warm-up has passed.
    pub p: f64,
    /// Online steps required before online batches may be drawn.
    pub starting_size: usize,
    pub online_capacity: usize,
    pub offline_capacity: usize,
    pub batch_size: usize,
}

impl Default for OorbConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            starting_size: 1_000,
            online_capacity: 2_000,
            offline_capacity: 300_000,
            batch_size: 256,
        }
    }
}

impl OorbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if self.online_capacity == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "online capacity and batch size must be positive".into(),
            ));
        }
        if self.online_capacity > self.offline_capacity {
            return Err(Error::InvalidConfig(
                "online capacity must not exceed offline capacity".into(),
            ));
        }
        if self.batch_size > self.online_capacity {
            return Err(Error::InvalidConfig(
                "batch size must not exceed online capacity".into(),
            ));
        }
        Ok(())
    }
}

/// A batch drawn entirely from one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedBatch {
    pub transitions: Vec<Transition>,
    pub source: Source,
}

/// Column-stacked view of a batch for the network code.
#[derive(Debug, Clone)]
pub struct BatchArrays {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub terminals: Array1<f64>,
}

impl SourcedBatch {
    pub fn new(transitions: Vec<Transition>, source: Source) -> Self {
        Self { transitions, source }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn weight(&self) -> f64 {
        weight_for(self.source)
    }

    pub fn arrays(&self) -> BatchArrays {
        let n = self.transitions.len();
        let obs = self.transitions.first().map_or(0, |t| t.state.len());
        let act = self.transitions.first().map_or(0, |t| t.action.len());
        let mut states = Array2::zeros((n, obs));
        let mut actions = Array2::zeros((n, act));
        let mut next_states = Array2::zeros((n, obs));
        for (i, t) in self.transitions.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state));
        }
        BatchArrays {
            states,
            actions,
            rewards: self.transitions.iter().map(|t| t.reward).collect(),
            next_states,
            terminals: self
                .transitions
                .iter()
                .map(|t| if t.terminal { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Oorb {
    config: OorbConfig,
    obs_dim: usize,
    act_dim: usize,
    online: VecDeque<Transition>,
    offline: VecDeque<Transition>,
}

impl Oorb {
    pub fn new(config: OorbConfig, obs_dim: usize, act_dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            online: VecDeque::with_capacity(config.online_capacity),
            offline: VecDeque::new(),
            config,
            obs_dim,
            act_dim,
        })
    }

    pub fn config(&self) -> &OorbConfig {
        &self.config
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    pub fn offline_len(&self) -> usize {
        self.offline.len()
    }

    pub fn online(&self) -> impl Iterator<Item = &Transition> {
        self.online.iter()
    }

    pub fn offline(&self) -> impl Iterator<Item = &Transition> {
        self.offline.iter()
    }

    fn check(&self, t: &Transition) -> Result<()> {
        let dims = [
            ("transition state", self.obs_dim, t.state.len()),
            ("transition action", self.act_dim, t.action.len()),
            ("transition next state", self.obs_dim, t.next_state.len()),
        ];
        for (context, expected, actual) in dims {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if !t.reward.is_finite() {
            return Err(Error::InvalidConfig("transition reward must be finite".into()));
        }
        Ok(())
    }

    /// Appends an offline dataset to the offline buffer.
    pub fn load_offline(&mut self, dataset: &[Transition]) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let available = self.config.offline_capacity - self.offline.len();
        if dataset.len() > available {
            return Err(Error::BufferOverflow {
                requested: dataset.len(),
                available,
            });
        }
        for t in dataset {
            self.check(t)?;
        }
        self.offline.extend(dataset.iter().cloned());
        Ok(())
    }

    /// Stores an interaction step in both buffers, evicting oldest entries at capacity.
    pub fn push_online(&mut self, t: Transition) -> Result<()> {
        self.check(&t)?;
        if self.online.len() == self.config.online_capacity {
            self.online.pop_front();
        }
        self.online.push_back(t.clone());
        if self.offline.len() == self.config.offline_capacity {
            self.offline.pop_front();
        }
        self.offline.push_back(t);
        Ok(())
    }

    /// Picks the batch source for the current online step count.
    ///
    /// `p_s` is always drawn, so the rng advances identically whatever the outcome.
    pub fn choose_source<R: Rng + ?Sized>(&self, online_steps: usize, rng: &mut R) -> Source {
        let p_s: f64 = rng.random();
        if p_s < self.config.p
            && online_steps > self.config.starting_size
            && self.online.len() >= self.config.batch_size
        {
            Source::Online
        } else {
            Source::Offline
        }
    }

    /// Draws a source-homogeneous batch, uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, online_steps: usize, rng: &mut R) -> Result<SourcedBatch> {
        self.sample_with(online_steps, false, rng)
    }

    /// As [`Oorb::sample`]; `offline_only` discards an online draw in favour of the offline buffer.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        online_steps: usize,
        offline_only: bool,
        rng: &mut R,
    ) -> Result<SourcedBatch> {
        let batch_size = self.config.batch_size;
        if self.offline.len() < batch_size {
            return Err(Error::InsufficientData {
                available: self.offline.len(),
                batch_size,
            });
        }
        let mut source = self.choose_source(online_steps, rng);
        if offline_only {
            source = Source::Offline;
        }
        let buffer = match source {
            Source::Online => &self.online,
            Source::Offline => &self.offline,
        };
        let transitions = (0..batch_size)
            .map(|_| buffer[rng.random_range(0..buffer.len())].clone())
            .collect();
        Ok(SourcedBatch::new(transitions, source))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(i: usize) -> Transition {
        Transition {
            state: vec![i as f64, 0.0],
            action: vec![0.5],
            reward: -(i as f64),
            next_state: vec![i as f64 + 1.0, 0.0],
            terminal: false,
        }
    }

    fn config(capacity: usize, batch: usize) -> OorbConfig {
        OorbConfig {
            p: 0.5,
            starting_size: 10,
            online_capacity: capacity,
            offline_capacity: 100_000,
            batch_size: batch,
        }
    }

    #[test]
    fn load_sizes_accumulate() {
        let mut b = Oorb::new(config(16, 4), 2, 1).unwrap();
        let data: Vec<_> = (0..10_000).map(tr).collect();
        b.load_offline(&data).unwrap();
        assert_eq!((b.offline_len(), b.online_len()), (10_000, 0));
        b.load_offline(&data[..5]).unwrap();
        assert_eq!(b.offline_len(), 10_005);
    }

    #[test]
    fn load_rejects_mismatch_overflow_and_empty() {
        let mut b = Oorb::new(config(16, 4), 2, 1).unwrap();
        let mut bad = tr(0);
        bad.action = vec![0.1, 0.2];
        assert!(matches!(b.load_offline(&[bad]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(b.load_offline(&[]), Err(Error::EmptyDataset)));
        let mut small = Oorb::new(
            OorbConfig {
                offline_capacity: 20,
                ..config(16, 4)
            },
            2,
            1,
        )
        .unwrap();
        let data: Vec<_> = (0..21).map(tr).collect();
        assert!(matches!(small.load_offline(&data), Err(Error::BufferOverflow { .. })));
    }

    #[test]
    fn push_goes_to_both_buffers_fifo() {
        let mut b = Oorb::new(config(16, 4), 2, 1).unwrap();
        b.push_online(tr(0)).unwrap();
        assert_eq!((b.online_len(), b.offline_len()), (1, 1));
        for i in 1..48 {
            b.push_online(tr(i)).unwrap();
        }
        let kept: Vec<f64> = b.online().map(|t| t.state[0]).collect();
        let expected: Vec<f64> = (32..48).map(|i| i as f64).collect();
        assert_eq!(kept, expected);
        assert_eq!(b.offline_len(), 48);
    }

    #[test]
    fn sampling_needs_a_full_offline_batch() {
        let mut b = Oorb::new(config(16, 4), 2, 1).unwrap();
        b.push_online(tr(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(0, &mut rng), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn warm_up_and_zero_probability_force_offline() {
        let mut b = Oorb::new(config(16, 4), 2, 1).unwrap();
        for i in 0..16 {
            b.push_online(tr(i)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(b.sample(10, &mut rng).unwrap().source, Source::Offline);
        }
        let mut never = b.clone();
        never.config.p = 0.0;
        for _ in 0..1000 {
            assert_eq!(never.sample(1_000, &mut rng).unwrap().source, Source::Offline);
        }
    }

    #[test]
    fn small_online_buffer_falls_back_to_offline() {
        let mut b = Oorb::new(
            OorbConfig {
                p: 1.0,
                ..config(16, 4)
            },
            2,
            1,
        )
        .unwrap();
        b.load_offline(&(100..200).map(tr).collect::<Vec<_>>()).unwrap();
        for i in 0..3 {
            b.push_online(tr(i)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(b.sample(50, &mut rng).unwrap().source, Source::Offline);
        b.push_online(tr(3)).unwrap();
        assert_eq!(b.sample(50, &mut rng).unwrap().source, Source::Online);
    }

    #[test]
    fn batches_are_homogeneous() {
        let mut b = Oorb::new(config(16, 8), 2, 1).unwrap();
        b.load_offline(&(1000..1100).map(tr).collect::<Vec<_>>()).unwrap();
        for i in 0..16 {
            b.push_online(tr(i)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let batch = b.sample(100, &mut rng).unwrap();
            assert_eq!(batch.len(), 8);
            if batch.source == Source::Online {
                assert!(batch.transitions.iter().all(|t| t.state[0] < 16.0));
            }
        }
    }

    #[test]
    fn weights() {
        assert_eq!(weight_for(Source::Online), 0.0);
        assert_eq!(weight_for(Source::Offline), 1.0);
        assert_eq!(3.7 + weight_for(Source::Online) * 12.5, 3.7);
    }

    #[test]
    fn config_validation() {
        assert!(Oorb::new(
            OorbConfig {
                batch_size: 32,
                ..config(16, 4)
            },
            2,
            1
        )
        .is_err());
        assert!(Oorb::new(
            OorbConfig {
                p: 1.5,
                ..config(16, 4)
            },
            2,
            1
        )
        .is_err());
        assert!(Oorb::new(
            OorbConfig {
                offline_capacity: 8,
                ..config(16, 4)
            },
            2,
            1
        )
        .is_err());
    }
}
