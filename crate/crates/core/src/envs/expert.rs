use super::pendulum::{wrap_angle, GRAVITY, LENGTH, MAX_TORQUE};
use super::pointmass::GOAL;
use super::EnvKind;
use crate::error::{Error, Result};

// pendulum: linear stabilizer inside the capture region, energy pumping outside
const STABILIZE_ANGLE: f64 = 0.8;
const STABILIZE_SPEED: f64 = 4.0;
const K_ANGLE: f64 = 12.0;
const K_RATE: f64 = 3.0;
const K_ENERGY: f64 = 0.3;

const K_POS: f64 = 2.0;
const K_VEL: f64 = 2.8;

/// Hand-designed controller for the built-in tasks.
pub fn scripted_expert_action(env_name: &str, physical_state: &[f64]) -> Result<Vec<f64>> {
    match env_name.parse::<EnvKind>()? {
        EnvKind::Pendulum => {
            if physical_state.len() != 2 {
                return Err(Error::DimensionMismatch {
                    context: "pendulum state",
                    expected: 2,
                    actual: physical_state.len(),
                });
            }
            Ok(vec![pendulum_expert(physical_state[0], physical_state[1])])
        }
        EnvKind::PointMass => {
            if physical_state.len() != 4 {
                return Err(Error::DimensionMismatch {
                    context: "point-mass state",
                    expected: 4,
                    actual: physical_state.len(),
                });
            }
            Ok((0..2)
                .map(|k| (-K_POS * (physical_state[k] - GOAL[k]) - K_VEL * physical_state[2 + k]).clamp(-1.0, 1.0))
                .collect())
        }
    }
}

fn pendulum_expert(theta: f64, theta_dot: f64) -> f64 {
    let angle = wrap_angle(theta);
    if angle.abs() < STABILIZE_ANGLE && theta_dot.abs() < STABILIZE_SPEED {
        return (-K_ANGLE * angle - K_RATE * theta_dot).clamp(-MAX_TORQUE, MAX_TORQUE);
    }
    // energy with the upright rest state at 1.5 g / l
    let upright = 1.5 * GRAVITY / LENGTH;
    let energy = 0.5 * theta_dot * theta_dot + upright * theta.cos();
    if theta_dot == 0.0 {
        return MAX_TORQUE;
    }
    (K_ENERGY * (upright - energy) * theta_dot).clamp(-MAX_TORQUE, MAX_TORQUE)
}
