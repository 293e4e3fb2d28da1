//! Dequantization of 8-bit integer data.
//!
//! A continuous density model is only well-posed on continuous data, so each
//! integer pixel value `raw` gets uniform noise added before rescaling:
//! `x = (raw + u) / 256` with `u ~ U(0, 1)` lands in `[0, 1)`. The symmetric
//! variant maps the same quantity onto `[-1, 1)`, which is the same thing as
//! adding uniform noise of width 1/128 in the target scale.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DequantizeTarget {
    /// `[0, 1)`, noise width 1/256.
    Unit,
    /// `[-1, 1)`, noise width 1/128.
    Symmetric,
}

impl DequantizeTarget {
    pub fn interval(self) -> (f64, f64) {
        match self {
            DequantizeTarget::Unit => (0.0, 1.0),
            DequantizeTarget::Symmetric => (-1.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DequantizeTarget::Unit => "unit",
            DequantizeTarget::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(DequantizeTarget::Unit),
            "symmetric" => Ok(DequantizeTarget::Symmetric),
            other => Err(Error::Config(format!(
                "unknown dequantize target '{other}'"
            ))),
        }
    }
}

/// Add uniform noise to integer-valued data and rescale to the target interval.
///
/// Every entry of `raw` must be an integer in `{0..255}`.
pub fn dequantize(raw: &Tensor, target: DequantizeTarget, rng: &mut RngStream) -> Result<Tensor> {
    if let Some(v) = raw
        .data()
        .iter()
        .find(|v| v.fract() != 0.0 || **v < 0.0 || **v > 255.0)
    {
        return Err(Error::Domain(format!(
            "raw value {v} is not an integer in 0..=255"
        )));
    }
    let out = Tensor::from_fn(raw.rows(), raw.cols(), |r, c| {
        let x = (raw.get(r, c) + rng.uniform()) / 256.0;
        match target {
            DequantizeTarget::Unit => x,
            DequantizeTarget::Symmetric => 2.0 * x - 1.0,
        }
    });
    Ok(out)
}
