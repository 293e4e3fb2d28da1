//! Synthetic 2D corpora with known analytic densities, used to verify the
//! training criterion end to end at desk scale.

use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toy2dKind {
    GaussianMixture,
    Ring,
}

impl Toy2dKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian-mixture" => Ok(Toy2dKind::GaussianMixture),
            "ring" => Ok(Toy2dKind::Ring),
            other => Err(Error::Config(format!("unknown toy2d kind '{other}'"))),
        }
    }
}

/// One full-covariance 2D Gaussian mixture component.
#[derive(Debug, Clone, Copy)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Symmetric covariance `[[xx, xy], [xy, yy]]`.
    pub cov: [[f64; 2]; 2],
}

impl GaussianComponent {
    fn cholesky(&self) -> [[f64; 2]; 2] {
        let a = self.cov[0][0];
        let b = self.cov[0][1];
        let c = self.cov[1][1];
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).sqrt();
        [[l11, 0.0], [l21, l22]]
    }

    fn log_density(&self, x: f64, y: f64) -> f64 {
        let a = self.cov[0][0];
        let b = self.cov[0][1];
        let c = self.cov[1][1];
        let det = a * c - b * b;
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        let quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad
    }

    fn sample(&self, rng: &mut RngStream) -> [f64; 2] {
        let l = self.cholesky();
        let z0 = rng.normal();
        let z1 = rng.normal();
        [
            self.mean[0] + l[0][0] * z0,
            self.mean[1] + l[1][0] * z0 + l[1][1] * z1,
        ]
    }
}

/// The default corpus: an equal-weight pair of correlated Gaussians centered
/// at (-2, 0) and (2, 0). The correlations are mild and share a sign, so the
/// conditional over either coordinate moves with the observed one but stays
/// unimodal everywhere, which is what the inpainting checks rely on.
pub fn default_mixture() -> Vec<GaussianComponent> {
    vec![
        GaussianComponent {
            weight: 0.5,
            mean: [-2.0, 0.0],
            cov: [[0.81, 0.09], [0.09, 0.25]],
        },
        GaussianComponent {
            weight: 0.5,
            mean: [2.0, 0.0],
            cov: [[1.0, 0.11], [0.11, 0.3025]],
        },
    ]
}

pub const RING_RADIUS: f64 = 3.0;
pub const RING_SIGMA: f64 = 0.25;
pub const TOY2D_DOMAIN: (f64, f64) = (-8.0, 8.0);

pub fn mixture_log_density(components: &[GaussianComponent], x: f64, y: f64) -> f64 {
    // log-sum-exp over components.
    let terms: Vec<f64> = components
        .iter()
        .map(|c| c.weight.ln() + c.log_density(x, y))
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub fn sample_mixture(components: &[GaussianComponent], n: usize, rng: &mut RngStream) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut chosen = components.len() - 1;
        for (i, c) in components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let p = components[chosen].sample(rng);
        data.push(p[0].clamp(TOY2D_DOMAIN.0, TOY2D_DOMAIN.1));
        data.push(p[1].clamp(TOY2D_DOMAIN.0, TOY2D_DOMAIN.1));
    }
    Tensor::new(n, 2, data).unwrap()
}

fn sample_ring(n: usize, rng: &mut RngStream) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let r = RING_RADIUS + RING_SIGMA * rng.normal();
        let theta = 2.0 * std::f64::consts::PI * rng.uniform();
        data.push((r * theta.cos()).clamp(TOY2D_DOMAIN.0, TOY2D_DOMAIN.1));
        data.push((r * theta.sin()).clamp(TOY2D_DOMAIN.0, TOY2D_DOMAIN.1));
    }
    Tensor::new(n, 2, data).unwrap()
}

/// Analytic log-density of the generating process.
pub fn toy2d_log_density(kind: Toy2dKind, x: f64, y: f64) -> f64 {
    match kind {
        Toy2dKind::GaussianMixture => mixture_log_density(&default_mixture(), x, y),
        Toy2dKind::Ring => {
            // r ~ N(RING_RADIUS, RING_SIGMA^2), angle uniform; the truncation
            // at r = 0 is 12 sigma out and ignored.
            let r = (x * x + y * y).sqrt();
            let pdf_r = -0.5 * ((r - RING_RADIUS) / RING_SIGMA).powi(2)
                - (2.0 * std::f64::consts::PI).sqrt().ln()
                - RING_SIGMA.ln();
            pdf_r - (2.0 * std::f64::consts::PI * r).ln()
        }
    }
}

/// Synthetic 2D dataset with a 70/15/15 train/validation/test split and
/// domain interval [-8, 8].
pub fn make_toy2d(kind: Toy2dKind, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::Config(format!(
            "toy2d needs at least 100 examples, got {n}"
        )));
    }
    let examples = match kind {
        Toy2dKind::GaussianMixture => sample_mixture(&default_mixture(), n, rng),
        Toy2dKind::Ring => sample_ring(n, rng),
    };
    let valid = n * 15 / 100;
    let test = n * 15 / 100;
    Dataset::new(examples, Splits::new(n, valid, test)?, TOY2D_DOMAIN)
}
