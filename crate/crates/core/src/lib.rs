//! Adaptive policy learning for offline-to-online reinforcement learning.
//!
//! Offline batches are trained pessimistically and near-on-policy online
//! batches greedily, switched per batch by the online-offline replay buffer.
//! Two agents are provided: [`gcql::Gcql`] (Q-ensemble with a conservative
//! penalty) and [`gctd3bc::Gctd3bc`] (TD3 with behavior cloning).
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod dataio;
pub mod envs;
pub mod error;
pub mod gcql;
pub mod gctd3bc;
pub mod nn;
pub mod oorb;
pub mod orchestrator;

pub use error::{Error, Result};
