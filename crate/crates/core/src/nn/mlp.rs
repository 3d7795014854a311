//! Dense feed-forward networks over a flat parameter vector.
//!
//! Parameters are stored per layer as a row-major `(out, in)` weight matrix
//! followed by the `out` biases. A layer computes `z = W a + b` and applies
//! the hidden activation, except for the last layer which applies the output
//! activation.
//!
//! Two forward routes exist: [`mlp_forward`] evaluates one input with plain
//! loops, [`forward_batch`] evaluates a batch with matrix products and records
//! a [`Tape`] for [`backward`].

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Location of one layer inside a parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, hidden_activation: Activation, output_activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if layer_widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        if hidden_activation == Activation::Identity {
            return Err(Error::InvalidConfig("hidden activation must be relu or tanh".into()));
        }
        if output_activation == Activation::Relu {
            return Err(Error::InvalidConfig(
                "output activation must be identity or tanh".into(),
            ));
        }
        Ok(Self {
            layer_widths,
            hidden_activation,
            output_activation,
        })
    }

    /// `input → hidden... → output` with the given activations.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, hidden_activation, output_activation)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub(crate) fn slots(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        for slot in self.slots() {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            for _ in 0..slot.fan_in * slot.fan_out + slot.fan_out {
                values.push(rng.random_range(-bound..bound));
            }
        }
        ParameterVector(values)
    }

    pub fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        Ok(())
    }
}

/// Flat network parameters in canonical layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

fn weight_view<'a>(params: &'a [f64], slot: &LayerSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((slot.fan_out, slot.fan_in), &params[slot.weights..slot.biases])
        .expect("slot shape matches spec")
}

fn bias_view<'a>(params: &'a [f64], slot: &LayerSlot) -> ArrayView1<'a, f64> {
    ArrayView1::from(&params[slot.biases..slot.biases + slot.fan_out])
}

/// Evaluates the network on a single input.
pub fn mlp_forward(spec: &MlpSpec, params: &ParameterVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: spec.input_dim(),
            actual: input.len(),
        });
    }
    let mut current = input.to_vec();
    for (layer, slot) in spec.slots().iter().enumerate() {
        let act = spec.activation_for(layer);
        let w = &params[slot.weights..slot.biases];
        let b = &params[slot.biases..slot.biases + slot.fan_out];
        let next: Vec<f64> = (0..slot.fan_out)
            .map(|o| {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let z = row.iter().zip(&current).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
                act.apply(z)
            })
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer,
                phase: "forward",
            });
        }
        current = next;
    }
    Ok(current)
}

/// Per-layer activations of a batch forward pass; row `i` belongs to input `i`.
#[derive(Debug, Clone)]
pub struct Tape {
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.activations.last().unwrap().view()
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Evaluates the network on every row of `inputs`.
pub fn forward_batch(spec: &MlpSpec, params: &ParameterVector, inputs: ArrayView2<'_, f64>) -> Result<Tape> {
    spec.check_params(params)?;
    if inputs.ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: spec.input_dim(),
            actual: inputs.ncols(),
        });
    }
    let mut activations = Vec::with_capacity(spec.num_layers() + 1);
    activations.push(inputs.to_owned());
    for (layer, slot) in spec.slots().iter().enumerate() {
        let act = spec.activation_for(layer);
        let prev = activations.last().unwrap();
        let mut z = Array2::zeros((prev.nrows(), slot.fan_out));
        z += &bias_view(params, slot);
        general_mat_mul(1.0, prev, &weight_view(params, slot).t(), 1.0, &mut z);
        let mut finite = true;
        z.mapv_inplace(|v| {
            let y = act.apply(v);
            finite &= y.is_finite();
            y
        });
        if !finite {
            return Err(Error::NonFinite {
                layer,
                phase: "forward",
            });
        }
        activations.push(z);
    }
    Ok(Tape { activations })
}

/// Back-propagates `d_output` (dL/d outputs, one row per batch element).
///
/// Returns the parameter gradient and the gradient with respect to the inputs.
pub fn backward(
    spec: &MlpSpec,
    params: &ParameterVector,
    tape: &Tape,
    d_output: ArrayView2<'_, f64>,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut grads = vec![0.0; spec.param_count()];
    let d_input = backward_impl(spec, params, tape, d_output, Some(&mut grads))?;
    Ok((grads, d_input))
}

/// Like [`backward`] but skips the parameter gradient.
pub fn input_gradient(
    spec: &MlpSpec,
    params: &ParameterVector,
    tape: &Tape,
    d_output: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    backward_impl(spec, params, tape, d_output, None)
}

fn backward_impl(
    spec: &MlpSpec,
    params: &ParameterVector,
    tape: &Tape,
    d_output: ArrayView2<'_, f64>,
    mut grads: Option<&mut [f64]>,
) -> Result<Array2<f64>> {
    spec.check_params(params)?;
    if d_output.dim() != tape.output().dim() {
        return Err(Error::DimensionMismatch {
            context: "output gradient",
            expected: tape.output().len(),
            actual: d_output.len(),
        });
    }
    let slots = spec.slots();
    let mut delta = d_output.to_owned();
    for layer in (0..slots.len()).rev() {
        let slot = &slots[layer];
        let act = spec.activation_for(layer);
        let out = &tape.activations[layer + 1];
        if act != Activation::Identity {
            delta.zip_mut_with(out, |d, &y| *d *= act.derivative_from_output(y));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer,
                phase: "backward",
            });
        }
        let input = &tape.activations[layer];
        if let Some(g) = grads.as_deref_mut() {
            let (gw, gb) = g[slot.weights..slot.biases + slot.fan_out].split_at_mut(slot.fan_in * slot.fan_out);
            let mut gw =
                ndarray::ArrayViewMut2::from_shape((slot.fan_out, slot.fan_in), gw).expect("slot shape matches spec");
            general_mat_mul(1.0, &delta.t(), input, 1.0, &mut gw);
            for (b, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                *b += s;
            }
        }
        let mut d_prev = Array2::zeros((delta.nrows(), slot.fan_in));
        general_mat_mul(1.0, &delta, &weight_view(params, slot), 0.0, &mut d_prev);
        delta = d_prev;
    }
    Ok(delta)
}

/// A scalar loss over a batch of network outputs.
pub trait OutputLoss {
    /// Returns the loss value and dL/d outputs.
    fn value_and_grad(&self, outputs: ArrayView2<'_, f64>) -> (f64, Array2<f64>);
}

impl<F> OutputLoss for F
where
    F: Fn(ArrayView2<'_, f64>) -> (f64, Array2<f64>),
{
    fn value_and_grad(&self, outputs: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        self(outputs)
    }
}

/// Value and exact parameter gradient of `loss` evaluated on the network outputs for `inputs`.
pub fn loss_gradients<L: OutputLoss + ?Sized>(
    spec: &MlpSpec,
    params: &ParameterVector,
    inputs: ArrayView2<'_, f64>,
    loss: &L,
) -> Result<(f64, Vec<f64>)> {
    let tape = forward_batch(spec, params, inputs)?;
    let (value, d_out) = loss.value_and_grad(tape.output());
    if !value.is_finite() {
        return Err(Error::NonFinite {
            layer: spec.num_layers(),
            phase: "loss",
        });
    }
    let (grads, _) = backward(spec, params, &tape, d_out.view())?;
    Ok((value, grads))
}
