//! MAP inpainting: clamp the observed coordinates and run projected noisy
//! gradient ascent on the model log-density over the hidden ones, with step
//! size `alpha_i = 10 / (100 + i)`.

use crate::data::whitening::{apply_whitening, whitening_grad_to_input, WhiteningRecord};
use crate::error::{Error, Result};
use crate::flow::{flow_backward, flow_forward, FlowModel};
use crate::prior::Prior;
use crate::rng::{seeded_rng, RngStream};
use crate::tensor::Tensor;

/// One completion task: which coordinates are observed, their values, the
/// projection interval, and the ascent schedule knobs.
#[derive(Debug, Clone)]
pub struct InpaintTask {
    pub observed_mask: Vec<bool>,
    /// Read only where the mask is true.
    pub observed_values: Vec<f64>,
    pub domain: (f64, f64),
    pub iterations: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl InpaintTask {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.observed_mask.len() != dim || self.observed_values.len() != dim {
            return Err(Error::dimension(format!(
                "task mask/values length {} does not match model dim {dim}",
                self.observed_mask.len()
            )));
        }
        if self.observed_mask.iter().all(|&m| m) {
            return Err(Error::Config(
                "all coordinates observed: nothing to inpaint".into(),
            ));
        }
        if self.domain.0 >= self.domain.1 {
            return Err(Error::Config("empty domain interval".into()));
        }
        Ok(())
    }
}

/// Input-space log-density `log p_X(x)` of each row: prior log-density of the
/// latent code plus the flow log-det plus the whitening volume correction.
pub fn log_density(
    model: &FlowModel,
    prior: &Prior,
    whitening: Option<&WhiteningRecord>,
    x: &Tensor,
) -> Result<Vec<f64>> {
    let z = match whitening {
        Some(rec) => apply_whitening(rec, x)?,
        None => x.clone(),
    };
    let (h, log_det, _) = flow_forward(model, &z)?;
    let correction = log_det + whitening.map_or(0.0, |w| w.log_abs_det);
    Ok(prior
        .log_density_rows(&h)?
        .into_iter()
        .map(|lp| lp + correction)
        .collect())
}

/// Gradient of `log p_X` with respect to the input coordinates, one row per
/// example. The log-det terms are constant in `x`, so only the prior term
/// propagates.
pub fn log_density_input_grad(
    model: &FlowModel,
    prior: &Prior,
    whitening: Option<&WhiteningRecord>,
    x: &Tensor,
) -> Result<Tensor> {
    let z = match whitening {
        Some(rec) => apply_whitening(rec, x)?,
        None => x.clone(),
    };
    let (h, _, tape) = flow_forward(model, &z)?;
    let grad_h = prior.log_density_grad(&h)?;
    let grads = flow_backward(model, &tape, &grad_h, 0.0)?;
    match whitening {
        Some(rec) => whitening_grad_to_input(rec, &grads.input),
        None => Ok(grads.input),
    }
}

/// Complete the hidden coordinates of one example by projected noisy gradient
/// ascent. Observed coordinates stay clamped throughout; hidden ones start at
/// the domain midpoint and stay inside the domain interval after every step.
pub fn inpaint(
    model: &FlowModel,
    prior: &Prior,
    whitening: Option<&WhiteningRecord>,
    task: &InpaintTask,
) -> Result<Tensor> {
    let dim = model.dim();
    task.validate(dim)?;
    let hidden: Vec<usize> = (0..dim).filter(|&i| !task.observed_mask[i]).collect();
    let midpoint = 0.5 * (task.domain.0 + task.domain.1);
    let mut x = Tensor::from_fn(1, dim, |_, c| {
        if task.observed_mask[c] {
            task.observed_values[c]
        } else {
            midpoint
        }
    });
    let mut rng = seeded_rng(task.seed).derive("inpaint");
    for i in 0..task.iterations {
        let alpha = 10.0 / (100.0 + i as f64);
        let grad = log_density_input_grad(model, prior, whitening, &x)?;
        let row = x.row_mut(0);
        for &j in &hidden {
            let noise = task.noise_scale * rng.normal();
            row[j] = (row[j] + alpha * (grad.get(0, j) + noise))
                .clamp(task.domain.0, task.domain.1);
        }
    }
    Ok(x)
}

/// Build an observed-coordinate mask from a named preset over a
/// `width x height` image grid. The name picks the region that is *hidden*
/// (to be inpainted); everything else is observed.
pub fn mask_preset(
    name: &str,
    width: usize,
    height: usize,
    rng: &mut RngStream,
) -> Result<Vec<bool>> {
    let dim = width * height;
    let hidden_flat = |f: &dyn Fn(usize, usize) -> bool| -> Vec<bool> {
        (0..dim)
            .map(|i| {
                let (r, c) = (i / width, i % width);
                !f(r, c)
            })
            .collect()
    };
    let random_hidden = |fraction: f64, rng: &mut RngStream| -> Vec<bool> {
        let k = (dim as f64 * fraction).floor() as usize;
        let mut idx: Vec<usize> = (0..dim).collect();
        rng.shuffle(&mut idx);
        let mut observed = vec![true; dim];
        for &i in &idx[..k] {
            observed[i] = false;
        }
        observed
    };
    let mask = match name {
        "top_rows" => hidden_flat(&|r, _| r < height / 2),
        "bottom_rows" => hidden_flat(&|r, _| r >= height - height / 2),
        "odd_pixels" => (0..dim).map(|i| i % 2 == 0).collect(),
        "even_pixels" => (0..dim).map(|i| i % 2 == 1).collect(),
        "left_side" => hidden_flat(&|_, c| c < width / 2),
        "right_side" => hidden_flat(&|_, c| c >= width - width / 2),
        "middle_vertical" => hidden_flat(&|_, c| c >= width / 4 && c < width / 4 + width / 2),
        "middle_horizontal" => hidden_flat(&|r, _| r >= height / 4 && r < height / 4 + height / 2),
        "random75" => random_hidden(0.75, rng),
        "random90" => random_hidden(0.90, rng),
        other => {
            return Err(Error::Config(format!(
                "unknown mask preset '{other}'"
            )))
        }
    };
    Ok(mask)
}
