//! Training loop: shuffled minibatches, Adam updates, per-epoch validation,
//! and best-epoch model selection.

pub mod adam;
pub mod config;
pub mod loss;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use config::TrainConfig;
pub use loss::{mean_log_likelihood, nice_loss, nice_loss_with_workers};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::data::whitening::WhiteningRecord;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::flow::{make_reference_model, FlowModel};
use crate::prior::Prior;
use crate::rng::seeded_rng;
use crate::tensor::Tensor;

/// Where to put run artifacts. With `run_dir` set the loop writes
/// `metrics.log` (deterministic), `timing.log` (wall time, excluded from the
/// determinism contract), `config`, `best.ckpt`, and optional per-epoch
/// checkpoints.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub run_dir: Option<PathBuf>,
    /// Resolved config text embedded into checkpoints and echoed to `config`.
    pub config_echo: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch; `None` for the pre-training record.
    pub train_nll: Option<f64>,
    pub valid_ll: f64,
}

impl EpochRecord {
    /// One deterministic JSON object per line.
    pub fn to_json_line(&self) -> String {
        let train = match self.train_nll {
            Some(v) => serde_json::Value::from(v),
            None => serde_json::Value::Null,
        };
        serde_json::json!({
            "epoch": self.epoch,
            "train_nll": train,
            "valid_ll": self.valid_ll,
        })
        .to_string()
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub best_valid_ll: f64,
    pub metrics: Vec<EpochRecord>,
    /// Set when training stopped early on a numeric failure; the checkpoint
    /// still holds the best model seen before the failure.
    pub aborted: Option<String>,
}

/// Mean input-space log-likelihood of `rows` (already in model space): the
/// model-space likelihood plus the whitening volume correction.
pub fn evaluate(
    model: &FlowModel,
    prior: &Prior,
    rows: &Tensor,
    whitening: Option<&WhiteningRecord>,
    workers: usize,
) -> Result<f64> {
    let ll = mean_log_likelihood(model, prior, rows, workers)?;
    Ok(ll + whitening.map_or(0.0, |w| w.log_abs_det))
}

struct RunWriter {
    metrics: fs::File,
    timing: fs::File,
    dir: PathBuf,
}

impl RunWriter {
    fn create(dir: &Path, config_echo: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config"), config_echo)?;
        Ok(Self {
            metrics: fs::File::create(dir.join("metrics.log"))?,
            timing: fs::File::create(dir.join("timing.log"))?,
            dir: dir.to_path_buf(),
        })
    }

    fn record(&mut self, rec: &EpochRecord, seconds: f64) -> Result<()> {
        writeln!(self.metrics, "{}", rec.to_json_line())?;
        writeln!(
            self.timing,
            "{}",
            serde_json::json!({"epoch": rec.epoch, "seconds": seconds})
        )?;
        Ok(())
    }
}

/// Run the training loop and return the best checkpoint by validation
/// log-likelihood.
///
/// With `max_epochs = 0` the initialized model is evaluated once and returned
/// as-is. A numeric overflow mid-training aborts the loop but keeps the best
/// checkpoint seen so far (reported via `TrainResult::aborted`).
pub fn train(cfg: &TrainConfig, dataset: &Dataset, opts: &TrainOptions) -> Result<TrainResult> {
    cfg.validate()?;
    if dataset.splits.train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    if dataset.splits.valid.is_empty() {
        return Err(Error::Config(
            "validation split is empty; model selection needs one".into(),
        ));
    }
    let dim = dataset.dim();
    let mut model = make_reference_model(dim, cfg.hidden_layers, cfg.hidden_units, cfg.seed)?;
    let prior = Prior::new(cfg.prior, dim);
    let adam_cfg = cfg.adam();
    let mut opt_state = {
        let shapes: Vec<(usize, usize)> = model
            .param_tensors_mut()
            .iter()
            .map(|t| t.shape())
            .collect();
        OptimizerState::new(&shapes)
    };
    let mut shuffle_rng = seeded_rng(cfg.seed).derive("train.shuffle");

    let mut writer = match &opts.run_dir {
        Some(dir) => Some(RunWriter::create(dir, &opts.config_echo)?),
        None => None,
    };
    let valid = dataset.valid_rows();
    let whitening = dataset.whitening.as_ref();

    let make_ckpt = |model: &FlowModel, opt: Option<&OptimizerState>, step: u64| Checkpoint {
        model: model.clone(),
        prior: cfg.prior,
        whitening: dataset.whitening.clone(),
        optimizer: opt.cloned(),
        step_counter: step,
        config_echo: opts.config_echo.clone(),
    };

    let started = Instant::now();
    let mut metrics = Vec::new();
    let baseline_ll = evaluate(&model, &prior, &valid, whitening, cfg.workers)?;
    let record = EpochRecord {
        epoch: 0,
        train_nll: None,
        valid_ll: baseline_ll,
    };
    if let Some(w) = writer.as_mut() {
        w.record(&record, started.elapsed().as_secs_f64())?;
    }
    metrics.push(record);

    let mut best_model = model.clone();
    let mut best_state = cfg.save_optimizer_state.then(|| opt_state.clone());
    let mut best_valid_ll = baseline_ll;
    let mut best_epoch = 0usize;
    let mut best_step = 0u64;
    let mut aborted = None;

    let mut indices: Vec<usize> = dataset.splits.train.clone().collect();
    let n_train = indices.len();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        shuffle_rng.shuffle(&mut indices);
        let mut loss_sum = 0.0;
        let mut start = 0;
        while start < n_train {
            let end = (start + cfg.batch_size).min(n_train);
            let batch = dataset.examples.gather_rows(&indices[start..end]);
            let (loss, grads) = match nice_loss_with_workers(&model, &prior, &batch, cfg.workers)
            {
                Ok(v) => v,
                Err(Error::NumericOverflow(msg)) => {
                    aborted = Some(format!("epoch {epoch}: {msg}"));
                    break 'epochs;
                }
                Err(other) => return Err(other),
            };
            loss_sum += loss * (end - start) as f64;

            let mut grad_tensors: Vec<Tensor> =
                grads.param_tensors().into_iter().cloned().collect();
            if let Some(limit) = cfg.clip_norm {
                clip_global_norm(&mut grad_tensors, limit);
            }
            let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
            adam_step(
                &mut opt_state,
                &mut model.param_tensors_mut(),
                &grad_refs,
                &adam_cfg,
            )?;
            start = end;
        }

        let train_nll = loss_sum / n_train as f64;
        let valid_ll = evaluate(&model, &prior, &valid, whitening, cfg.workers)?;
        let record = EpochRecord {
            epoch,
            train_nll: Some(train_nll),
            valid_ll,
        };
        if let Some(w) = writer.as_mut() {
            w.record(&record, epoch_start.elapsed().as_secs_f64())?;
        }
        metrics.push(record);

        if valid_ll > best_valid_ll {
            best_valid_ll = valid_ll;
            best_model = model.clone();
            best_state = cfg.save_optimizer_state.then(|| opt_state.clone());
            best_epoch = epoch;
            best_step = opt_state.step;
        }
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            if let Some(w) = writer.as_ref() {
                let ckpt = make_ckpt(
                    &model,
                    cfg.save_optimizer_state.then_some(&opt_state),
                    opt_state.step,
                );
                ckpt.save(&w.dir.join(format!("epoch_{epoch}.ckpt")))?;
            }
        }
    }

    let checkpoint = make_ckpt(&best_model, best_state.as_ref(), best_step);
    if let Some(w) = writer.as_ref() {
        checkpoint.save(&w.dir.join("best.ckpt"))?;
    }
    Ok(TrainResult {
        checkpoint,
        best_epoch,
        best_valid_ll,
        metrics,
        aborted,
    })
}

fn clip_global_norm(grads: &mut [Tensor], limit: f64) {
    let norm_sq: f64 = grads
        .iter()
        .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > limit {
        let scale = limit / norm;
        for t in grads.iter_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }
}
