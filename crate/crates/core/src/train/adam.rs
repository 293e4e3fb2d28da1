//! Adam with bias correction, in the early parametrization the training setup
//! calls for: `beta1` is the first-moment decay ("momentum"), the second
//! moment decays at `second_moment_decay`, and `lambda` multiplies `beta1`
//! once per step (`lambda = 1` means no schedule).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    /// Second-moment EMA decay. A raw `beta2` knob in the early
    /// parametrization maps to `1 - beta2` here (see `TrainConfig`).
    pub second_moment_decay: f64,
    pub epsilon: f64,
    /// Per-step decay of `beta1`: at step `t`, `beta1_t = beta1 * lambda^(t-1)`.
    pub lambda: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            second_moment_decay: 0.99,
            epsilon: 1e-4,
            lambda: 1.0,
        }
    }
}

/// Per-parameter moment accumulators. The tensor lists mirror the parameter
/// traversal order of the model they were created for.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// Running product of the per-step `beta1_t`, used for bias correction
    /// when a `lambda` schedule is active.
    pub beta1_product: f64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(param_shapes: &[(usize, usize)]) -> Self {
        Self {
            step: 0,
            beta1_product: 1.0,
            first_moment: param_shapes
                .iter()
                .map(|&(r, c)| Tensor::zeros(r, c))
                .collect(),
            second_moment: param_shapes
                .iter()
                .map(|&(r, c)| Tensor::zeros(r, c))
                .collect(),
        }
    }

    pub fn for_tensors(params: &[&mut Tensor]) -> Self {
        Self::new(&params.iter().map(|t| t.shape()).collect::<Vec<_>>())
    }
}

/// One Adam update: `m <- b1_t m + (1 - b1_t) g`, `v <- d v + (1 - d) g^2`,
/// bias-corrected, then `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.first_moment.len()
        || params.len() != state.second_moment.len()
    {
        return Err(Error::dimension(format!(
            "optimizer state holds {} tensors, got {} params and {} grads",
            state.first_moment.len(),
            params.len(),
            grads.len()
        )));
    }
    state.step += 1;
    let t = state.step;
    let beta1_t = cfg.beta1 * cfg.lambda.powi(t as i32 - 1);
    state.beta1_product *= beta1_t;
    let decay = cfg.second_moment_decay;
    let m_corr = 1.0 - state.beta1_product;
    let v_corr = 1.0 - decay.powi(t as i32);

    for ((theta, grad), (m, v)) in params.iter_mut().zip(grads).zip(
        state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut()),
    ) {
        if theta.shape() != grad.shape() || theta.shape() != m.shape() {
            return Err(Error::dimension(format!(
                "parameter {:?} vs grad {:?} vs state {:?}",
                theta.shape(),
                grad.shape(),
                m.shape()
            )));
        }
        let td = theta.data_mut();
        let gd = grad.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..td.len() {
            let g = gd[i];
            md[i] = beta1_t * md[i] + (1.0 - beta1_t) * g;
            vd[i] = decay * vd[i] + (1.0 - decay) * g * g;
            let m_hat = md[i] / m_corr;
            let v_hat = vd[i] / v_corr;
            td[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
