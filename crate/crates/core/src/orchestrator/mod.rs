//! The offline-to-online training loop, evaluation and normalized scoring.

mod eval;
mod experiment;
mod record;
mod train;

pub use eval::{compute_references, evaluate, evaluate_returns, normalized_score, random_action, rollout, References};
pub use experiment::{build_agent, execute};
pub use record::{EvalRow, RunRecord, CSV_HEADER};
pub use train::{pretrain, run, seed_stream, PhaseReport, Schedule, Streams, Variant};
