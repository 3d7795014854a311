use super::mlp::ParameterVector;
use crate::error::{Error, Result};

/// Moves `target` toward `online`: `tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut ParameterVector, online: &ParameterVector, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("tau must lie in [0, 1], got {tau}")));
    }
    if target.len() != online.len() {
        return Err(Error::DimensionMismatch {
            context: "polyak update",
            expected: target.len(),
            actual: online.len(),
        });
    }
    if tau == 1.0 {
        target.copy_from_slice(online);
    } else if tau > 0.0 {
        for (t, &o) in target.iter_mut().zip(online.iter()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}
