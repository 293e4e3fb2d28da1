//! Dataset resolution from the `[data]` config section.

use std::path::PathBuf;

use nice_core::data::dequantize::{dequantize, DequantizeTarget};
use nice_core::data::matrix_io::load_matrix_auto;
use nice_core::data::toy2d::{make_toy2d, Toy2dKind};
use nice_core::data::whitening::{approx_whitening_fit, zca_fit, RmsPropSettings, WhiteningKind};
use nice_core::data::{load_mnist_idx, Splits};
use nice_core::{seeded_rng, Dataset, Error, Result, Tensor};

use crate::config_file::Resolved;

fn required_path(cfg: &Resolved, key: &str) -> Result<PathBuf> {
    let v = cfg.get(key);
    if v.is_empty() {
        return Err(Error::Config(format!("{key} is required for this source")));
    }
    Ok(PathBuf::from(v))
}

fn apply_limit(t: Tensor, limit: usize) -> Tensor {
    if limit > 0 && limit < t.rows() {
        t.slice_rows(0..limit)
    } else {
        t
    }
}

/// Build the dataset described by the `[data]` section. Randomness (toy
/// sampling, dequantization noise, whitening fits) derives from `seed` via
/// fixed labels. `fit_whitening = false` skips the `data.whitening` setting,
/// which evaluation paths need because their whitening comes from the
/// checkpoint.
pub fn resolve_dataset(cfg: &Resolved, seed: u64, fit_whitening: bool) -> Result<Dataset> {
    let source = cfg.get("data.source");
    let root = seeded_rng(seed);
    let limit = cfg.parse_usize("data.limit")?;

    let mut dataset = match source {
        "toy2d-mixture" | "toy2d-ring" => {
            if limit > 0 {
                return Err(Error::Config(
                    "data.limit is not supported for toy sources; set data.n instead".into(),
                ));
            }
            let kind = if source == "toy2d-mixture" {
                Toy2dKind::GaussianMixture
            } else {
                Toy2dKind::Ring
            };
            let n = cfg.parse_usize("data.n")?;
            let mut rng = root.derive("data.toy");
            make_toy2d(kind, n, &mut rng)?
        }
        "idx" | "nicemat" | "csv" => {
            let raw = if source == "idx" {
                let images = required_path(cfg, "data.path")?;
                let labels = cfg.get("data.labels_path");
                let labels = (!labels.is_empty()).then(|| PathBuf::from(labels));
                load_mnist_idx(&images, labels.as_deref())?.0
            } else {
                load_matrix_auto(&required_path(cfg, "data.path")?)?
            };
            let raw = apply_limit(raw, limit);

            let dequant = match cfg.get("data.dequantize") {
                "auto" => {
                    if source == "idx" {
                        Some(DequantizeTarget::Unit)
                    } else {
                        None
                    }
                }
                "none" => None,
                other => Some(DequantizeTarget::parse(other)?),
            };
            let (examples, auto_domain) = match dequant {
                Some(target) => {
                    let mut rng = root.derive("data.dequantize");
                    let x = dequantize(&raw, target, &mut rng)?;
                    (x, target.interval())
                }
                None => {
                    let lo = raw.data().iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = raw.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    (raw, (lo, hi))
                }
            };
            let domain = (
                match cfg.get("data.domain_lo") {
                    "auto" => auto_domain.0,
                    _ => cfg.parse_f64("data.domain_lo")?,
                },
                match cfg.get("data.domain_hi") {
                    "auto" => auto_domain.1,
                    _ => cfg.parse_f64("data.domain_hi")?,
                },
            );
            let n = examples.rows();
            Dataset::new(examples, Splits::new(n, 0, 0)?, domain)?
        }
        other => {
            return Err(Error::Config(format!("unknown data source '{other}'")));
        }
    };

    // Split sizes: explicit counts win, -1 means 15%.
    let n = dataset.len();
    let count = |key: &str| -> Result<usize> {
        let v = cfg.parse_i64(key)?;
        Ok(if v < 0 { n * 15 / 100 } else { v as usize })
    };
    let (valid, test) = (count("data.valid_count")?, count("data.test_count")?);
    dataset.splits = Splits::new(n, valid, test)?;

    if fit_whitening {
        let kind = WhiteningKind::parse(cfg.get("data.whitening"))?;
        match kind {
            WhiteningKind::None => {}
            WhiteningKind::Zca => {
                let eps = cfg.parse_f64("data.zca_epsilon")?;
                let record = zca_fit(&dataset.train_rows(), eps)?;
                dataset = dataset.with_whitening(record)?;
            }
            WhiteningKind::Approximate => {
                let epochs = cfg.parse_usize("data.whitening_epochs")?;
                let mut rng = root.derive("data.whitening");
                let fit = approx_whitening_fit(
                    &dataset.train_rows(),
                    epochs,
                    &RmsPropSettings::default(),
                    &mut rng,
                )?;
                dataset = dataset.with_whitening(fit.record)?;
            }
        }
    }
    Ok(dataset)
}
