//! INI-style configuration: flat `key = value` pairs under `[section]`
//! headers, a fixed schema with defaults, and fail-closed validation (unknown
//! keys are rejected, both in files and in `--set` overrides).

use std::collections::{BTreeMap, BTreeSet};

use nice_core::{Error, Result};

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

/// Every recognized config key with its default and help line.
pub const SCHEMA: &[KeySpec] = &[
    KeySpec { key: "data.source", default: "toy2d-mixture", help: "dataset source: toy2d-mixture | toy2d-ring | idx | nicemat | csv" },
    KeySpec { key: "data.path", default: "", help: "input file for idx/nicemat/csv sources" },
    KeySpec { key: "data.labels_path", default: "", help: "optional IDX label file (consistency check only)" },
    KeySpec { key: "data.n", default: "20000", help: "example count for the toy sources" },
    KeySpec { key: "data.limit", default: "0", help: "keep only the first N rows (0 = all)" },
    KeySpec { key: "data.dequantize", default: "auto", help: "dequantization: auto | unit | symmetric | none (auto = unit for idx, none otherwise)" },
    KeySpec { key: "data.valid_count", default: "-1", help: "validation rows (-1 = 15% of the dataset)" },
    KeySpec { key: "data.test_count", default: "-1", help: "test rows (-1 = 15% of the dataset)" },
    KeySpec { key: "data.whitening", default: "none", help: "preprocessing: none | zca | approximate" },
    KeySpec { key: "data.zca_epsilon", default: "1e-5", help: "eigenvalue regularizer for ZCA" },
    KeySpec { key: "data.whitening_epochs", default: "100", help: "training epochs for approximate whitening" },
    KeySpec { key: "data.domain_lo", default: "auto", help: "lower domain bound (auto = from dequantization or data minimum)" },
    KeySpec { key: "data.domain_hi", default: "auto", help: "upper domain bound (auto = from dequantization or data maximum)" },
    KeySpec { key: "model.prior", default: "logistic", help: "latent prior: logistic | gaussian" },
    KeySpec { key: "model.hidden_layers", default: "2", help: "hidden layers per coupling function" },
    KeySpec { key: "model.hidden_units", default: "32", help: "units per hidden layer" },
    KeySpec { key: "train.learning_rate", default: "1e-3", help: "Adam learning rate" },
    KeySpec { key: "train.beta1", default: "0.9", help: "Adam first-moment decay (momentum)" },
    KeySpec { key: "train.beta2", default: "0.01", help: "raw second-moment knob; the EMA decay is 1 - beta2" },
    KeySpec { key: "train.second_moment_decay", default: "", help: "direct second-moment EMA decay; overrides beta2 (set only one)" },
    KeySpec { key: "train.epsilon", default: "1e-4", help: "Adam denominator epsilon" },
    KeySpec { key: "train.lambda", default: "1.0", help: "per-step beta1 decay factor (1 = no schedule)" },
    KeySpec { key: "train.batch_size", default: "256", help: "minibatch size" },
    KeySpec { key: "train.max_epochs", default: "50", help: "training epochs (0 = evaluate the initialized model once)" },
    KeySpec { key: "train.seed", default: "0", help: "the single root seed; all randomness derives from it" },
    KeySpec { key: "train.clip_norm", default: "0", help: "global-norm gradient clip (0 = off)" },
    KeySpec { key: "train.workers", default: "0", help: "loss-evaluation worker threads (0 = NICE_NUM_WORKERS or 1); results are bitwise identical for any value" },
    KeySpec { key: "train.checkpoint_every", default: "0", help: "write epoch_<k>.ckpt every k epochs (0 = off)" },
    KeySpec { key: "train.save_optimizer_state", default: "false", help: "embed optimizer moments in checkpoints" },
];

pub fn schema_help() -> String {
    let mut out = String::from("Config keys (INI sections, overridable with --set key=value):\n");
    for spec in SCHEMA {
        let default = if spec.default.is_empty() { "<unset>" } else { spec.default };
        out.push_str(&format!("  {:<28} default: {:<14} {}\n", spec.key, default, spec.help));
    }
    out
}

/// Fully resolved configuration: schema defaults overlaid with file values
/// and `--set` overrides. Tracks which keys were set explicitly.
#[derive(Debug, Clone)]
pub struct Resolved {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

fn known_key(key: &str) -> bool {
    SCHEMA.iter().any(|s| s.key == key)
}

pub fn parse_ini(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        if section.is_empty() {
            return Err(Error::Config(format!(
                "line {}: key '{key}' appears before any [section]",
                lineno + 1
            )));
        }
        out.push((format!("{section}.{key}"), value.trim().to_string()));
    }
    Ok(out)
}

impl Resolved {
    pub fn from_sources(file_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = SCHEMA
            .iter()
            .map(|s| (s.key.to_string(), s.default.to_string()))
            .collect();
        let mut explicit = BTreeSet::new();
        if let Some(text) = file_text {
            for (key, value) in parse_ini(text)? {
                if !known_key(&key) {
                    return Err(Error::Config(format!("unknown config key '{key}'")));
                }
                values.insert(key.clone(), value);
                explicit.insert(key);
            }
        }
        for item in overrides {
            let Some((key, value)) = item.split_once('=') else {
                return Err(Error::Config(format!(
                    "override '{item}' is not of the form section.key=value"
                )));
            };
            let key = key.trim();
            if !known_key(key) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
            values.insert(key.to_string(), value.trim().to_string());
            explicit.insert(key.to_string());
        }
        Ok(Self { values, explicit })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' missing from schema"))
    }

    pub fn was_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(known_key(key));
        self.values.insert(key.to_string(), value.into());
        self.explicit.insert(key.to_string());
    }

    pub fn parse_f64(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("{key}: '{}' is not a number", self.get(key))))
    }

    pub fn parse_usize(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("{key}: '{}' is not a count", self.get(key))))
    }

    pub fn parse_i64(&self, key: &str) -> Result<i64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("{key}: '{}' is not an integer", self.get(key))))
    }

    pub fn parse_u64(&self, key: &str) -> Result<u64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("{key}: '{}' is not an integer", self.get(key))))
    }

    pub fn parse_bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!("{key}: '{other}' is not a boolean"))),
        }
    }

    /// Deterministic INI rendering of every key, grouped by section.
    pub fn render_ini(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (key, value) in &self.values {
            let (section, name) = key.split_once('.').unwrap();
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{name} = {value}\n"));
        }
        out
    }
}
