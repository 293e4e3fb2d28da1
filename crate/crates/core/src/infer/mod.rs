//! Post-training applications: ancestral sampling, spectrum extraction, and
//! the sphere-manifold export. Inpainting lives in [`inpaint`].

pub mod inpaint;

pub use inpaint::{inpaint, log_density, log_density_input_grad, mask_preset, InpaintTask};

use crate::data::whitening::{invert_whitening, WhiteningRecord};
use crate::error::{Error, Result};
use crate::flow::{flow_inverse, FlowModel};
use crate::prior::Prior;
use crate::rng::{seeded_rng, RngStream};
use crate::tensor::Tensor;

/// Unbiased ancestral samples: draw latent codes from the prior and map them
/// back through the inverse flow (and the whitening inverse, when present).
pub fn sample_model(
    model: &FlowModel,
    prior: &Prior,
    whitening: Option<&WhiteningRecord>,
    n: usize,
    rng: &mut RngStream,
) -> Result<Tensor> {
    if prior.dim != model.dim() {
        return Err(Error::dimension(format!(
            "prior dim {} does not match model dim {}",
            prior.dim,
            model.dim()
        )));
    }
    let h = prior.sample(n, rng);
    let x = flow_inverse(model, &h)?;
    match whitening {
        Some(rec) => invert_whitening(rec, &x),
        None => Ok(x),
    }
}

/// Per-latent-dimension scale parameters `sigma_d = exp(-s_d)`, sorted
/// descending. Large values mark the dimensions the model spends variation
/// on; the ratio between the extremes measures learned manifold structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub sigma: Vec<f64>,
}

impl Spectrum {
    pub fn ratio(&self) -> f64 {
        self.sigma[0] / self.sigma[self.sigma.len() - 1]
    }

    /// Two-column text: rank and sigma, one line per dimension.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,sigma\n");
        for (i, s) in self.sigma.iter().enumerate() {
            out.push_str(&format!("{},{s}\n", i + 1));
        }
        out
    }
}

/// Pure function of the scaling layer: no data involved.
pub fn spectrum(model: &FlowModel) -> Spectrum {
    let mut sigma: Vec<f64> = model
        .scaling
        .log_scale
        .data()
        .iter()
        .map(|s| (-s).exp())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Spectrum { sigma }
}

/// A random rotation of the 3-sphere embedded in the first three latent
/// coordinates, mapped to data space through the inverse flow.
///
/// The sphere is a `grid x grid` latitude/longitude net of radius `radius`
/// (pass the prior's component standard deviation for a typical-set shell).
/// `rotation_seed = None` keeps the sphere axis-aligned.
pub fn sphere_manifold(
    model: &FlowModel,
    whitening: Option<&WhiteningRecord>,
    rotation_seed: Option<u64>,
    grid: usize,
    radius: f64,
) -> Result<Tensor> {
    let dim = model.dim();
    if dim < 3 {
        return Err(Error::dimension(format!(
            "sphere manifold needs dim >= 3, got {dim}"
        )));
    }
    if grid == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    let rotation = rotation_seed.map(random_rotation_3d);

    let mut latents = Tensor::zeros(grid * grid, dim);
    for i in 0..grid {
        // Latitude offset by half a cell keeps the poles from collapsing rows.
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / grid as f64;
        for j in 0..grid {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / grid as f64;
            let p = [
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ];
            let p = match &rotation {
                Some(r) => [
                    r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
                    r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
                    r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
                ],
                None => p,
            };
            let row = latents.row_mut(i * grid + j);
            row[0] = p[0];
            row[1] = p[1];
            row[2] = p[2];
        }
    }
    let x = flow_inverse(model, &latents)?;
    match whitening {
        Some(rec) => invert_whitening(rec, &x),
        None => Ok(x),
    }
}

/// Deterministic random rotation: Gram-Schmidt on a seeded Gaussian 3x3,
/// sign-fixed to determinant +1.
fn random_rotation_3d(seed: u64) -> [[f64; 3]; 3] {
    let mut rng = seeded_rng(seed).derive("manifold.rotation");
    let mut cols = [[0.0f64; 3]; 3];
    for col in cols.iter_mut() {
        for v in col.iter_mut() {
            *v = rng.normal();
        }
    }
    // Orthonormalize the columns.
    for k in 0..3 {
        for prev in 0..k {
            let other = cols[prev];
            let dot: f64 = (0..3).map(|i| cols[k][i] * other[i]).sum();
            for (c, o) in cols[k].iter_mut().zip(other) {
                *c -= dot * o;
            }
        }
        let norm: f64 = cols[k].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cols[k].iter_mut() {
            *v /= norm;
        }
    }
    let det = cols[0][0] * (cols[1][1] * cols[2][2] - cols[1][2] * cols[2][1])
        - cols[0][1] * (cols[1][0] * cols[2][2] - cols[1][2] * cols[2][0])
        + cols[0][2] * (cols[1][0] * cols[2][1] - cols[1][1] * cols[2][0]);
    if det < 0.0 {
        for v in cols[2].iter_mut() {
            *v = -*v;
        }
    }
    cols
}
