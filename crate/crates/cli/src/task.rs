//! Inpainting task files: an INI `[task]` section naming the hidden region
//! (preset or explicit indices), the ascent schedule, and where the observed
//! values come from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nice_core::infer::mask_preset;
use nice_core::{seeded_rng, Error, Result};

use crate::config_file::parse_ini;

const TASK_KEYS: &[(&str, &str)] = &[
    ("task.mask", ""),
    ("task.width", "0"),
    ("task.height", "0"),
    ("task.iterations", "1000"),
    ("task.noise_scale", "1.0"),
    ("task.seed", "0"),
    ("task.domain_lo", "0.0"),
    ("task.domain_hi", "1.0"),
    ("task.observed", ""),
    ("task.row", "0"),
];

/// Parsed task file, mask not yet materialized (it needs the model dim).
#[derive(Debug, Clone)]
pub struct TaskFile {
    pub mask_spec: String,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub domain: (f64, f64),
    pub observed_path: PathBuf,
    /// Row of the observed matrix to complete; -1 means every row.
    pub row: i64,
}

pub fn parse_task_file(path: &Path) -> Result<TaskFile> {
    let text = std::fs::read_to_string(path)?;
    let mut values: BTreeMap<&str, String> = TASK_KEYS
        .iter()
        .map(|(k, d)| (*k, d.to_string()))
        .collect();
    for (key, value) in parse_ini(&text)? {
        let Some(slot) = TASK_KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(Error::Config(format!("unknown task key '{key}'")));
        };
        values.insert(slot.0, value);
    }
    let get = |k: &str| values.get(k).unwrap().clone();
    let parse_num = |k: &str| -> Result<f64> {
        get(k)
            .parse()
            .map_err(|_| Error::Config(format!("{k}: '{}' is not a number", get(k))))
    };
    if get("task.mask").is_empty() {
        return Err(Error::Config("task.mask is required".into()));
    }
    if get("task.observed").is_empty() {
        return Err(Error::Config("task.observed is required".into()));
    }
    Ok(TaskFile {
        mask_spec: get("task.mask"),
        width: parse_num("task.width")? as usize,
        height: parse_num("task.height")? as usize,
        iterations: parse_num("task.iterations")? as usize,
        noise_scale: parse_num("task.noise_scale")?,
        seed: parse_num("task.seed")? as u64,
        domain: (parse_num("task.domain_lo")?, parse_num("task.domain_hi")?),
        observed_path: PathBuf::from(get("task.observed")),
        row: parse_num("task.row")? as i64,
    })
}

impl TaskFile {
    /// Materialize the observed-coordinate mask for a model of width `dim`.
    pub fn build_mask(&self, dim: usize) -> Result<Vec<bool>> {
        if let Some(list) = self.mask_spec.strip_prefix("indices:") {
            // Explicitly listed hidden indices.
            let mut observed = vec![true; dim];
            for part in list.split(',') {
                let i: usize = part.trim().parse().map_err(|_| {
                    Error::Config(format!("task.mask: '{part}' is not an index"))
                })?;
                if i >= dim {
                    return Err(Error::Config(format!(
                        "task.mask: index {i} out of range for dim {dim}"
                    )));
                }
                observed[i] = false;
            }
            return Ok(observed);
        }
        let (mut w, mut h) = (self.width, self.height);
        if w == 0 && h == 0 {
            let side = (dim as f64).sqrt() as usize;
            if side * side == dim {
                (w, h) = (side, side);
            } else {
                return Err(Error::Config(
                    "task.width/task.height are required for non-square data".into(),
                ));
            }
        }
        if w * h != dim {
            return Err(Error::Config(format!(
                "task geometry {w}x{h} does not match model dim {dim}"
            )));
        }
        let mut rng = seeded_rng(self.seed).derive("task.mask");
        mask_preset(&self.mask_spec, w, h, &mut rng)
    }
}
