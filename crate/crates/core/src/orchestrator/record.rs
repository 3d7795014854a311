use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::References;
use crate::error::{Error, Result};
use crate::oorb::Source;

pub const CSV_HEADER: &str = "iteration,s_on,mean_return,normalized_score,critic_loss,penalty_value,policy_objective";

/// One evaluation point. Iteration 0 is the agent straight after pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub iteration: usize,
    pub s_on: usize,
    pub mean_return: f64,
    pub normalized_score: f64,
    pub critic_loss: Option<f64>,
    pub penalty_value: Option<f64>,
    pub policy_objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub master_seed: u64,
    pub config_snapshot: String,
    pub references: Option<References>,
    pub rows: Vec<EvalRow>,
    /// Source and weight of every update batch, pretraining included.
    pub batch_log: Vec<(Source, f64)>,
    pub pretrain_updates: usize,
    pub online_updates: usize,
    pub s_on: usize,
    pub iterations: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    pub fn push_row(&mut self, row: EvalRow) {
        debug_assert!(self.rows.last().is_none_or(|last| last.s_on <= row.s_on));
        self.rows.push(row);
    }

    pub fn total_updates(&self) -> usize {
        self.pretrain_updates + self.online_updates
    }

    /// Score of the agent as it left pretraining.
    pub fn post_pretrain_score(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.iteration == 0).map(|r| r.normalized_score)
    }

    /// Mean normalized score over the last three online evaluations.
    pub fn final_score(&self) -> Option<f64> {
        let online: Vec<&EvalRow> = self.rows.iter().filter(|r| r.iteration > 0).collect();
        let tail = &online[online.len().saturating_sub(3)..];
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(|r| r.normalized_score).sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.s_on,
                r.mean_return,
                r.normalized_score,
                opt(r.critic_loss),
                opt(r.penalty_value),
                opt(r.policy_objective)
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
