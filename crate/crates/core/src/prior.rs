//! Factorized latent priors: standard logistic and standard Gaussian.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Logistic,
    Gaussian,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Logistic => "logistic",
            PriorKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(PriorKind::Logistic),
            "gaussian" => Ok(PriorKind::Gaussian),
            other => Err(Error::Config(format!("unknown prior '{other}'"))),
        }
    }

    /// Standard deviation of one component.
    pub fn component_std(self) -> f64 {
        match self {
            PriorKind::Logistic => std::f64::consts::PI / 3f64.sqrt(),
            PriorKind::Gaussian => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prior {
    pub kind: PriorKind,
    pub dim: usize,
}

/// Numerically stable softplus: `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Prior {
    pub fn new(kind: PriorKind, dim: usize) -> Self {
        Self { kind, dim }
    }

    #[inline]
    fn component_log_density(&self, h: f64) -> f64 {
        match self.kind {
            PriorKind::Logistic => -softplus(h) - softplus(-h),
            PriorKind::Gaussian => -0.5 * (h * h + (2.0 * std::f64::consts::PI).ln()),
        }
    }

    #[inline]
    fn component_grad(&self, h: f64) -> f64 {
        match self.kind {
            PriorKind::Logistic => -(h / 2.0).tanh(),
            PriorKind::Gaussian => -h,
        }
    }

    /// Sum over components of the per-component log-density, one value per
    /// batch row.
    pub fn log_density_rows(&self, h: &Tensor) -> Result<Vec<f64>> {
        self.check_width(h)?;
        Ok((0..h.rows())
            .map(|r| h.row(r).iter().map(|&v| self.component_log_density(v)).sum())
            .collect())
    }

    /// Log-density of a single row (or the sum over a batch if `h` has one row).
    pub fn log_density(&self, h: &Tensor) -> Result<f64> {
        Ok(self.log_density_rows(h)?.iter().sum())
    }

    /// Elementwise gradient of the log-density.
    pub fn log_density_grad(&self, h: &Tensor) -> Result<Tensor> {
        self.check_width(h)?;
        Ok(h.map(|v| self.component_grad(v)))
    }

    /// `n` i.i.d. draws, one per row. Logistic uses the exact inverse CDF,
    /// Gaussian the Box-Muller normal stream.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Tensor {
        match self.kind {
            PriorKind::Logistic => {
                Tensor::from_fn(n, self.dim, |_, _| logistic_inverse_cdf(rng.uniform()))
            }
            PriorKind::Gaussian => rng.normal_tensor(n, self.dim),
        }
    }

    fn check_width(&self, h: &Tensor) -> Result<()> {
        if h.cols() != self.dim {
            return Err(Error::dimension(format!(
                "latent width {} does not match prior dim {}",
                h.cols(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Inverse CDF of the standard logistic: `log(u) - log(1 - u)`.
#[inline]
pub fn logistic_inverse_cdf(u: f64) -> f64 {
    u.ln() - (1.0 - u).ln()
}
