//! Mapping from resolved config values to core settings.

use nice_core::{Error, PriorKind, Result, TrainConfig};

use crate::config_file::Resolved;

/// Worker-pool size: an explicit `train.workers` wins, otherwise the
/// `NICE_NUM_WORKERS` environment variable, otherwise 1.
pub fn resolve_workers(cfg: &Resolved) -> Result<usize> {
    let configured = cfg.parse_usize("train.workers")?;
    if configured > 0 {
        return Ok(configured);
    }
    Ok(std::env::var("NICE_NUM_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1))
}

pub fn train_config_from(cfg: &Resolved) -> Result<TrainConfig> {
    let direct = cfg.get("train.second_moment_decay");
    let second_moment_decay = if !direct.is_empty() {
        if cfg.was_set("train.beta2") {
            return Err(Error::Config(
                "set either train.beta2 or train.second_moment_decay, not both".into(),
            ));
        }
        cfg.parse_f64("train.second_moment_decay")?
    } else {
        // Raw beta2 in the early parametrization: the EMA decay is 1 - beta2.
        1.0 - cfg.parse_f64("train.beta2")?
    };
    let clip = cfg.parse_f64("train.clip_norm")?;
    let config = TrainConfig {
        learning_rate: cfg.parse_f64("train.learning_rate")?,
        beta1: cfg.parse_f64("train.beta1")?,
        second_moment_decay,
        epsilon: cfg.parse_f64("train.epsilon")?,
        lambda: cfg.parse_f64("train.lambda")?,
        batch_size: cfg.parse_usize("train.batch_size")?,
        max_epochs: cfg.parse_usize("train.max_epochs")?,
        seed: cfg.parse_u64("train.seed")?,
        prior: PriorKind::parse(cfg.get("model.prior"))?,
        hidden_layers: cfg.parse_usize("model.hidden_layers")?,
        hidden_units: cfg.parse_usize("model.hidden_units")?,
        clip_norm: (clip > 0.0).then_some(clip),
        workers: resolve_workers(cfg)?,
        checkpoint_every: cfg.parse_usize("train.checkpoint_every")?,
        save_optimizer_state: cfg.parse_bool("train.save_optimizer_state")?,
    };
    config.validate()?;
    Ok(config)
}
