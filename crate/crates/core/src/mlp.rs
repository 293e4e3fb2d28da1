//! Rectifier MLPs with hand-derived reverse-mode gradients.
//!
//! These networks serve as the coupling functions of the flow: every hidden
//! layer applies ReLU, the output layer is linear. Forward passes record the
//! post-activation of each layer on a [`GradientTape`]; the backward pass
//! replays the tape to produce exact parameter and input gradients.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// One dense layer: weights are `[out x in]`, bias is `[out x 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Parameters of a rectifier MLP with linear output units.
///
/// The same shape doubles as the gradient container: `mlp_backward` returns an
/// `MlpParams` holding one gradient per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dimension("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dimension(format!(
                    "layer output width {} does not chain into next input width {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.shape() != (layer.out_dim(), 1) {
                return Err(Error::dimension(format!(
                    "bias shape {:?} does not match output width {}",
                    layer.bias.shape(),
                    layer.out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random initialization: uniform weights in `[-a, a]` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, zero biases. The final layer is
    /// scaled down by 0.01 so a fresh coupling function starts near zero.
    pub fn init(dims: &[usize], rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::dimension("an MLP needs input and output widths"));
        }
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let mut a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l == n_layers - 1 {
                a *= 0.01;
            }
            let weight = Tensor::from_fn(fan_out, fan_in, |_, _| (rng.uniform() * 2.0 - 1.0) * a);
            layers.push(DenseLayer {
                weight,
                bias: Tensor::zeros(fan_out, 1),
            });
        }
        Self::new(layers)
    }

    /// All-zero MLP with the given widths; maps everything to zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::dimension("an MLP needs input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer {
                weight: Tensor::zeros(w[1], w[0]),
                bias: Tensor::zeros(w[1], 1),
            })
            .collect();
        Self::new(layers)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Zero gradients shaped like these parameters.
    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Tensor::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Tensor::zeros(l.bias.rows(), 1),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.data().len())
            .sum()
    }

    /// Accumulate `other` into `self` elementwise (gradient reduction).
    pub fn accumulate(&mut self, other: &MlpParams) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }

    /// Parameter tensors in a fixed traversal order (weights then bias, layer
    /// by layer). The optimizer relies on this order being stable.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

/// Recorded forward intermediates: `activations[0]` is the input batch,
/// `activations[k]` the post-activation output of layer `k`. Enough to
/// reconstruct every gradient, including the ReLU masks (a hidden unit was
/// active iff its stored activation is positive; the subgradient at 0 is 0).
#[derive(Debug, Clone)]
pub struct GradientTape {
    pub activations: Vec<Tensor>,
}

impl GradientTape {
    pub fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }
}

/// Forward pass over a batch `[n x in_dim]`.
pub fn mlp_forward(params: &MlpParams, input: &Tensor) -> Result<(Tensor, GradientTape)> {
    if input.cols() != params.in_dim() {
        return Err(Error::dimension(format!(
            "input width {} does not match first-layer width {}",
            input.cols(),
            params.in_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(input.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let pre = activations[l]
            .matmul_bt(&layer.weight)?
            .add_row_broadcast(layer.bias.data())?;
        let act = if l + 1 == n_layers {
            pre
        } else {
            pre.map(|v| v.max(0.0))
        };
        activations.push(act);
    }
    let output = activations.last().unwrap().clone();
    if !output.is_all_finite() {
        return Err(Error::NumericOverflow(
            "non-finite value in MLP output".into(),
        ));
    }
    Ok((output, GradientTape { activations }))
}

/// Reverse pass: exact gradients of a scalar loss given `d loss / d output`.
///
/// Returns the parameter gradients (shaped like `params`) and the gradient
/// with respect to the input batch.
pub fn mlp_backward(
    params: &MlpParams,
    tape: &GradientTape,
    output_grad: &Tensor,
) -> Result<(MlpParams, Tensor)> {
    let n_layers = params.layers.len();
    if tape.activations.len() != n_layers + 1 {
        return Err(Error::dimension(
            "tape does not match the network depth",
        ));
    }
    if output_grad.shape() != tape.output().shape() {
        return Err(Error::dimension(format!(
            "output grad shape {:?} does not match output shape {:?}",
            output_grad.shape(),
            tape.output().shape()
        )));
    }

    let mut grads = params.zeros_like();
    let mut grad = output_grad.clone();
    for l in (0..n_layers).rev() {
        // Hidden layers: push the upstream gradient through the ReLU mask.
        // The output layer is linear, so its gradient passes through as-is.
        if l + 1 != n_layers {
            let act = &tape.activations[l + 1];
            let mut masked = grad.clone();
            for (g, &a) in masked.data_mut().iter_mut().zip(act.data()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            grad = masked;
        }
        let input = &tape.activations[l];
        grads.layers[l].weight = grad.matmul_at(input)?;
        grads.layers[l].bias = grad.col_sums();
        grad = grad.matmul(&params.layers[l].weight)?;
    }
    Ok((grads, grad))
}
