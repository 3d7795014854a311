//! Minimal dense network substrate: forward passes, exact gradients, Adam,
//! the squashed-Gaussian policy head and target-network tracking.

pub mod adam;
pub mod loss;
pub mod mlp;
pub mod policy;
pub mod target;

pub use adam::{adam_step, AdamState};
pub use mlp::{
    backward, forward_batch, input_gradient, loss_gradients, mlp_forward, Activation, MlpSpec, OutputLoss,
    ParameterVector, Tape,
};
pub use policy::{box_affine, standard_normal_matrix, ActionMode, PolicyBatch, SquashedGaussianPolicy};
pub use target::polyak_update;
