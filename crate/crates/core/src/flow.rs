//! The invertible transformation: coupling layers, the diagonal scaling layer,
//! and their composition with exact log-determinant accounting.
//!
//! A coupling layer leaves one index block unchanged and shifts the other by a
//! learned function of the first, so the Jacobian is triangular with unit
//! diagonal and the inverse is a subtraction. Stacking four such layers with
//! alternating blocks and topping with `exp(s)` scaling gives a bijection whose
//! log-determinant is exactly `sum(s)`.

use crate::error::{Error, Result};
use crate::mlp::{mlp_backward, mlp_forward, GradientTape, MlpParams};
use crate::rng::seeded_rng;
use crate::tensor::Tensor;

/// Index blocks of a coupling layer: `unchanged` passes through and feeds the
/// coupling function, `transformed` is rewritten by the coupling law.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub unchanged: Vec<usize>,
    pub transformed: Vec<usize>,
}

impl Partition {
    pub fn new(unchanged: Vec<usize>, transformed: Vec<usize>, dim: usize) -> Result<Self> {
        if unchanged.is_empty() || transformed.is_empty() {
            return Err(Error::dimension("both partition blocks must be nonempty"));
        }
        let mut seen = vec![false; dim];
        for &i in unchanged.iter().chain(&transformed) {
            if i >= dim {
                return Err(Error::dimension(format!(
                    "partition index {i} out of range for dim {dim}"
                )));
            }
            if seen[i] {
                return Err(Error::dimension(format!("partition index {i} repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::dimension("partition does not cover all indices"));
        }
        Ok(Self {
            unchanged,
            transformed,
        })
    }

    /// Odd indices unchanged, even indices transformed (0-based).
    pub fn odd_unchanged(dim: usize) -> Result<Self> {
        Self::new(
            (1..dim).step_by(2).collect(),
            (0..dim).step_by(2).collect(),
            dim,
        )
    }

    /// Even indices unchanged, odd indices transformed (0-based).
    pub fn even_unchanged(dim: usize) -> Result<Self> {
        Self::new(
            (0..dim).step_by(2).collect(),
            (1..dim).step_by(2).collect(),
            dim,
        )
    }
}

/// How the transformed block combines with the coupling function's output.
/// Only `Additive` is volume preserving; it is the one the reference stack
/// uses. The other two are provided with their inverses and log-det
/// contributions, and require multipliers bounded away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingLaw {
    Additive,
    Multiplicative,
    Affine,
}

const MULTIPLIER_FLOOR: f64 = 1e-12;

impl CouplingLaw {
    /// Output width the coupling function must produce for a transformed
    /// block of `block` components.
    pub fn required_fn_width(self, block: usize) -> usize {
        match self {
            CouplingLaw::Additive | CouplingLaw::Multiplicative => block,
            CouplingLaw::Affine => 2 * block,
        }
    }

    /// `y = g(a; b)` elementwise over a batch.
    pub fn apply(self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        match self {
            CouplingLaw::Additive => a.add(b),
            CouplingLaw::Multiplicative => {
                check_multipliers(b.data())?;
                a.hadamard(b)
            }
            CouplingLaw::Affine => {
                let w = a.cols();
                let scale = b.select_cols(&(0..w).collect::<Vec<_>>());
                let shift = b.select_cols(&(w..2 * w).collect::<Vec<_>>());
                check_multipliers(scale.data())?;
                a.hadamard(&scale)?.add(&shift)
            }
        }
    }

    /// `a = g^{-1}(y; b)`.
    pub fn invert(self, y: &Tensor, b: &Tensor) -> Result<Tensor> {
        match self {
            CouplingLaw::Additive => y.sub(b),
            CouplingLaw::Multiplicative => {
                check_multipliers(b.data())?;
                y.zip_div(b)
            }
            CouplingLaw::Affine => {
                let w = y.cols();
                let scale = b.select_cols(&(0..w).collect::<Vec<_>>());
                let shift = b.select_cols(&(w..2 * w).collect::<Vec<_>>());
                check_multipliers(scale.data())?;
                y.sub(&shift)?.zip_div(&scale)
            }
        }
    }

    /// Per-example log |det| contribution, one value per batch row of `b`.
    pub fn log_det_rows(self, b: &Tensor, block: usize) -> Vec<f64> {
        match self {
            CouplingLaw::Additive => vec![0.0; b.rows()],
            CouplingLaw::Multiplicative => (0..b.rows())
                .map(|r| b.row(r).iter().map(|v| v.abs().ln()).sum())
                .collect(),
            CouplingLaw::Affine => (0..b.rows())
                .map(|r| b.row(r)[..block].iter().map(|v| v.abs().ln()).sum())
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CouplingLaw::Additive => "additive",
            CouplingLaw::Multiplicative => "multiplicative",
            CouplingLaw::Affine => "affine",
        }
    }
}

fn check_multipliers(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| v.abs() < MULTIPLIER_FLOOR) {
        return Err(Error::Singularity(format!(
            "coupling multiplier below {MULTIPLIER_FLOOR:e}"
        )));
    }
    Ok(())
}

impl Tensor {
    fn zip_div(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(Error::dimension("elementwise division shape mismatch"));
        }
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a / b)
            .collect();
        Tensor::new(self.rows(), self.cols(), data)
    }
}

#[derive(Debug, Clone)]
pub struct CouplingLayer {
    pub partition: Partition,
    pub coupling_fn: MlpParams,
    pub law: CouplingLaw,
}

impl CouplingLayer {
    pub fn new(partition: Partition, coupling_fn: MlpParams, law: CouplingLaw) -> Result<Self> {
        if coupling_fn.in_dim() != partition.unchanged.len() {
            return Err(Error::dimension(format!(
                "coupling function input width {} does not match unchanged block size {}",
                coupling_fn.in_dim(),
                partition.unchanged.len()
            )));
        }
        let want = law.required_fn_width(partition.transformed.len());
        if coupling_fn.out_dim() != want {
            return Err(Error::dimension(format!(
                "coupling function output width {} does not match required width {} for {} law",
                coupling_fn.out_dim(),
                want,
                law.name()
            )));
        }
        Ok(Self {
            partition,
            coupling_fn,
            law,
        })
    }

    pub fn dim(&self) -> usize {
        self.partition.unchanged.len() + self.partition.transformed.len()
    }
}

/// Forward through one coupling layer over a batch `[n x D]`.
pub fn coupling_forward(layer: &CouplingLayer, x: &Tensor) -> Result<(Tensor, GradientTape)> {
    check_dim(layer.dim(), x)?;
    let kept = x.select_cols(&layer.partition.unchanged);
    let (fn_out, tape) = mlp_forward(&layer.coupling_fn, &kept)?;
    let block = x.select_cols(&layer.partition.transformed);
    let transformed = layer.law.apply(&block, &fn_out)?;
    let mut y = x.clone();
    y.scatter_cols(&layer.partition.transformed, &transformed)?;
    Ok((y, tape))
}

/// Exact inverse of [`coupling_forward`].
pub fn coupling_inverse(layer: &CouplingLayer, y: &Tensor) -> Result<Tensor> {
    check_dim(layer.dim(), y)?;
    let kept = y.select_cols(&layer.partition.unchanged);
    let (fn_out, _) = mlp_forward(&layer.coupling_fn, &kept)?;
    let block = y.select_cols(&layer.partition.transformed);
    let restored = layer.law.invert(&block, &fn_out)?;
    let mut x = y.clone();
    x.scatter_cols(&layer.partition.transformed, &restored)?;
    Ok(x)
}

/// Per-example log |det| of one coupling layer at input `x`.
pub fn coupling_log_det(layer: &CouplingLayer, x: &Tensor) -> Result<Vec<f64>> {
    check_dim(layer.dim(), x)?;
    let kept = x.select_cols(&layer.partition.unchanged);
    let (fn_out, _) = mlp_forward(&layer.coupling_fn, &kept)?;
    Ok(layer
        .law
        .log_det_rows(&fn_out, layer.partition.transformed.len()))
}

fn check_dim(dim: usize, t: &Tensor) -> Result<()> {
    if t.cols() != dim {
        return Err(Error::dimension(format!(
            "input width {} does not match layer dim {}",
            t.cols(),
            dim
        )));
    }
    Ok(())
}

/// Diagonal scaling `h_i -> exp(s_i) * h_i`, parametrized in the log domain so
/// the multiplier is always positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingLayer {
    pub log_scale: Tensor,
}

impl ScalingLayer {
    pub fn zeros(dim: usize) -> Self {
        Self {
            log_scale: Tensor::zeros(dim, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_scale.rows()
    }

    fn forward(&self, h: &Tensor) -> Tensor {
        let s = self.log_scale.data();
        Tensor::from_fn(h.rows(), h.cols(), |r, c| h.get(r, c) * s[c].exp())
    }

    fn inverse(&self, h: &Tensor) -> Tensor {
        let s = self.log_scale.data();
        Tensor::from_fn(h.rows(), h.cols(), |r, c| h.get(r, c) * (-s[c]).exp())
    }

    /// `sum(s)`: the log-determinant of the scaling map.
    pub fn log_det(&self) -> f64 {
        self.log_scale.sum()
    }
}

/// The full flow: an ordered stack of additive coupling layers with block
/// alternation, topped by the diagonal scaling layer.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub couplings: Vec<CouplingLayer>,
    pub scaling: ScalingLayer,
    dim: usize,
}

impl FlowModel {
    pub fn new(couplings: Vec<CouplingLayer>, scaling: ScalingLayer) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::dimension("a flow needs at least one coupling layer"));
        }
        let dim = couplings[0].dim();
        if scaling.dim() != dim {
            return Err(Error::dimension(format!(
                "scaling dim {} does not match coupling dim {}",
                scaling.dim(),
                dim
            )));
        }
        for (i, c) in couplings.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::dimension(format!(
                    "coupling layer {i} has dim {} but the flow has dim {dim}",
                    c.dim()
                )));
            }
            // The scalar log-det bookkeeping below relies on every coupling
            // being volume preserving.
            if c.law != CouplingLaw::Additive {
                return Err(Error::Config(format!(
                    "flow stacks support the additive law only, layer {i} is {}",
                    c.law.name()
                )));
            }
        }
        for (i, pair) in couplings.windows(2).enumerate() {
            let mut prev_unchanged = pair[0].partition.unchanged.clone();
            let mut next_transformed = pair[1].partition.transformed.clone();
            prev_unchanged.sort_unstable();
            next_transformed.sort_unstable();
            if prev_unchanged != next_transformed {
                return Err(Error::dimension(format!(
                    "coupling layers {i} and {} do not alternate blocks",
                    i + 1
                )));
            }
        }
        Ok(Self {
            couplings,
            scaling,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parameter tensors in optimizer order: each coupling's weights/biases in
    /// layer order, then the log-scale vector.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.couplings {
            out.extend(c.coupling_fn.tensors_mut());
        }
        out.push(&mut self.scaling.log_scale);
        out
    }

    pub fn param_count(&self) -> usize {
        self.couplings
            .iter()
            .map(|c| c.coupling_fn.param_count())
            .sum::<usize>()
            + self.dim
    }
}

/// Forward intermediates of one full flow pass.
#[derive(Debug, Clone)]
pub struct FlowTape {
    pub coupling_tapes: Vec<GradientTape>,
    /// The latent batch `h` (output of the scaling layer).
    pub latent: Tensor,
}

/// Gradients of a scalar loss with respect to every flow parameter, plus the
/// gradient with respect to the input batch.
#[derive(Debug, Clone)]
pub struct FlowGrads {
    pub couplings: Vec<MlpParams>,
    pub log_scale: Tensor,
    pub input: Tensor,
}

impl FlowGrads {
    pub fn zeros_like(model: &FlowModel, batch_rows: usize) -> FlowGrads {
        FlowGrads {
            couplings: model
                .couplings
                .iter()
                .map(|c| c.coupling_fn.zeros_like())
                .collect(),
            log_scale: Tensor::zeros(model.dim(), 1),
            input: Tensor::zeros(batch_rows, model.dim()),
        }
    }

    /// Gradient tensors in the same order as [`FlowModel::param_tensors_mut`].
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.couplings {
            out.extend(c.tensors());
        }
        out.push(&self.log_scale);
        out
    }

    /// Accumulate another gradient (same model) into this one. Input grads are
    /// per-example and are not merged here.
    pub fn accumulate_params(&mut self, other: &FlowGrads) {
        for (a, b) in self.couplings.iter_mut().zip(&other.couplings) {
            a.accumulate(b);
        }
        for (a, b) in self
            .log_scale
            .data_mut()
            .iter_mut()
            .zip(other.log_scale.data())
        {
            *a += b;
        }
    }
}

/// Map a data batch to latent codes. Returns the latent batch, the
/// log-determinant of the Jacobian (`sum(s)` for the all-additive stack,
/// independent of `x`), and the tape for the backward pass.
pub fn flow_forward(model: &FlowModel, x: &Tensor) -> Result<(Tensor, f64, FlowTape)> {
    check_dim(model.dim, x)?;
    let mut cur = x.clone();
    let mut tapes = Vec::with_capacity(model.couplings.len());
    for (i, layer) in model.couplings.iter().enumerate() {
        let (next, tape) = coupling_forward(layer, &cur)
            .map_err(|e| wrap_layer_error(e, i))?;
        if !next.is_all_finite() {
            return Err(Error::NumericOverflow(format!(
                "non-finite value after coupling layer {i}"
            )));
        }
        tapes.push(tape);
        cur = next;
    }
    let latent = model.scaling.forward(&cur);
    if !latent.is_all_finite() {
        return Err(Error::NumericOverflow(
            "non-finite value after scaling layer".into(),
        ));
    }
    let log_det = model.scaling.log_det();
    Ok((
        latent.clone(),
        log_det,
        FlowTape {
            coupling_tapes: tapes,
            latent,
        },
    ))
}

/// Map latent codes back to data space: scaling inverted by `exp(-s)`, then
/// the coupling layers in reverse order.
pub fn flow_inverse(model: &FlowModel, h: &Tensor) -> Result<Tensor> {
    check_dim(model.dim, h)?;
    let mut cur = model.scaling.inverse(h);
    for (i, layer) in model.couplings.iter().enumerate().rev() {
        cur = coupling_inverse(layer, &cur).map_err(|e| wrap_layer_error(e, i))?;
        if !cur.is_all_finite() {
            return Err(Error::NumericOverflow(format!(
                "non-finite value inverting coupling layer {i}"
            )));
        }
    }
    Ok(cur)
}

fn wrap_layer_error(e: Error, layer: usize) -> Error {
    match e {
        Error::NumericOverflow(msg) => {
            Error::NumericOverflow(format!("coupling layer {layer}: {msg}"))
        }
        other => other,
    }
}

/// Reverse pass through the whole flow.
///
/// `grad_latent` is `d loss / d h` and `grad_log_det` is `d loss / d log_det`.
/// The `s` gradient picks up both the path through the latent (its component
/// `i` is `sum_b grad_h[b,i] * h[b,i]`) and the direct log-det term, which
/// enters once per [`flow_forward`] call.
pub fn flow_backward(
    model: &FlowModel,
    tape: &FlowTape,
    grad_latent: &Tensor,
    grad_log_det: f64,
) -> Result<FlowGrads> {
    if grad_latent.shape() != tape.latent.shape() {
        return Err(Error::dimension(format!(
            "grad shape {:?} does not match latent shape {:?}",
            grad_latent.shape(),
            tape.latent.shape()
        )));
    }
    if tape.coupling_tapes.len() != model.couplings.len() {
        return Err(Error::dimension("tape does not match the flow depth"));
    }

    let s = model.scaling.log_scale.data();
    let dim = model.dim;
    let mut log_scale_grad = vec![grad_log_det; dim];
    for r in 0..grad_latent.rows() {
        let g = grad_latent.row(r);
        let h = tape.latent.row(r);
        for i in 0..dim {
            log_scale_grad[i] += g[i] * h[i];
        }
    }
    // d loss / d h4 = grad_h * exp(s), columnwise.
    let mut grad =
        Tensor::from_fn(grad_latent.rows(), dim, |r, c| grad_latent.get(r, c) * s[c].exp());

    let mut coupling_grads = vec![MlpParams::zeros(&[1, 1]).unwrap(); model.couplings.len()];
    for (i, layer) in model.couplings.iter().enumerate().rev() {
        let grad_block = grad.select_cols(&layer.partition.transformed);
        let (fn_grads, fn_input_grad) =
            mlp_backward(&layer.coupling_fn, &tape.coupling_tapes[i], &grad_block)?;
        // Pass-through block accumulates the coupling function's input grad;
        // the transformed block's grad is unchanged (additive law).
        let kept_grad = grad.select_cols(&layer.partition.unchanged);
        let kept_total = kept_grad.add(&fn_input_grad)?;
        let mut prev = Tensor::zeros(grad.rows(), dim);
        prev.scatter_cols(&layer.partition.unchanged, &kept_total)?;
        prev.scatter_cols(&layer.partition.transformed, &grad_block)?;
        coupling_grads[i] = fn_grads;
        grad = prev;
    }

    Ok(FlowGrads {
        couplings: coupling_grads,
        log_scale: Tensor::col_vector(&log_scale_grad),
        input: grad,
    })
}

/// The reference architecture: four additive coupling layers with odd/even
/// alternation (layers 1 and 3 transform the even block, layers 2 and 4 the
/// odd block), each coupling function an MLP with `hidden_layers` hidden
/// layers of `hidden_units` rectifier units, and a zero-initialized scaling
/// layer on top.
pub fn make_reference_model(
    dim: usize,
    hidden_layers: usize,
    hidden_units: usize,
    seed: u64,
) -> Result<FlowModel> {
    if dim < 2 {
        return Err(Error::dimension(format!(
            "flow dim must be at least 2, got {dim}"
        )));
    }
    let mut rng = seeded_rng(seed).derive("model-init");
    let mut couplings = Vec::with_capacity(4);
    for k in 0..4 {
        let partition = if k % 2 == 0 {
            Partition::odd_unchanged(dim)?
        } else {
            Partition::even_unchanged(dim)?
        };
        let mut dims = Vec::with_capacity(hidden_layers + 2);
        dims.push(partition.unchanged.len());
        dims.extend(std::iter::repeat_n(hidden_units, hidden_layers));
        dims.push(partition.transformed.len());
        let coupling_fn = MlpParams::init(&dims, &mut rng)?;
        couplings.push(CouplingLayer::new(partition, coupling_fn, CouplingLaw::Additive)?);
    }
    FlowModel::new(couplings, ScalingLayer::zeros(dim))
}

/// Reference-shaped flow whose coupling functions are all zero: the identity
/// map when the scaling is zero. Useful as a baseline and in fixtures.
pub fn identity_reference_model(dim: usize) -> Result<FlowModel> {
    if dim < 2 {
        return Err(Error::dimension(format!(
            "flow dim must be at least 2, got {dim}"
        )));
    }
    let mut couplings = Vec::with_capacity(4);
    for k in 0..4 {
        let partition = if k % 2 == 0 {
            Partition::odd_unchanged(dim)?
        } else {
            Partition::even_unchanged(dim)?
        };
        let coupling_fn = MlpParams::zeros(&[
            partition.unchanged.len(),
            partition.transformed.len(),
        ])?;
        couplings.push(CouplingLayer::new(partition, coupling_fn, CouplingLaw::Additive)?);
    }
    FlowModel::new(couplings, ScalingLayer::zeros(dim))
}
