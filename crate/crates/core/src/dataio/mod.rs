//! Dataset files, dataset generation and run configuration.

mod config;
mod format;
mod generate;

pub use config::{AgentKind, RunConfig, OUT_DIR_VAR};
pub use format::{
    read_dataset, read_references, write_dataset, write_references, DatasetFile, DatasetHeader, ReferenceFile,
    FORMAT_VERSION,
};
pub use generate::{
    behavior_action, behavior_returns, episode_returns, generate_dataset, generate_dataset_with, medium_replay_records,
    ReplaySettings, Tier, EXPERT_NOISE, MEDIUM_EXPERT_PROB,
};
