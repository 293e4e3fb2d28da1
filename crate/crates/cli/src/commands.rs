//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use nice_core::checkpoint::load as load_checkpoint;
use nice_core::data::matrix_io::{save_matrix, save_matrix_csv};
use nice_core::data::whitening::{approx_whitening_fit, save_record, zca_fit, RmsPropSettings};
use nice_core::data::Dataset;
use nice_core::infer::{inpaint, sample_model, sphere_manifold, spectrum, InpaintTask};
use nice_core::pgm::write_image_grid;
use nice_core::train::{train, TrainOptions};
use nice_core::{evaluate, seeded_rng, Error, Prior, Result, Tensor};

use crate::args::{
    EvalArgs, InpaintArgs, ManifoldArgs, MatrixFormat, SampleArgs, SpectrumArgs, SplitName,
    TrainArgs, WhitenArgs,
};
use crate::config_file::Resolved;
use crate::dataset::resolve_dataset;
use crate::settings::{resolve_workers, train_config_from};
use crate::task::parse_task_file;

fn load_resolved(config: &Path, set: &[String], seed: Option<u64>) -> Result<Resolved> {
    let text = fs::read_to_string(config)?;
    let mut resolved = Resolved::from_sources(Some(&text), set)?;
    if let Some(s) = seed {
        resolved.set("train.seed", s.to_string());
    }
    Ok(resolved)
}

fn ensure_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_echo(dir: &Path, text: &str) -> Result<()> {
    fs::write(dir.join("config"), text)?;
    Ok(())
}

/// Deterministic `key = value` echo for the checkpoint-only subcommands.
fn flags_echo(pairs: &[(&str, String)]) -> String {
    let mut out = String::from("[cli]\n");
    for (k, v) in pairs {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

fn save_rows(dir: &Path, stem: &str, rows: &Tensor, format: MatrixFormat) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        MatrixFormat::Nicemat => save_matrix(&path, rows)?,
        MatrixFormat::Csv => save_matrix_csv(&path, rows)?,
    }
    Ok(path)
}

/// Write a PGM grid next to the matrix when the rows are square images.
fn maybe_write_grid(dir: &Path, stem: &str, rows: &Tensor, domain: (f64, f64)) -> Result<bool> {
    let side = (rows.cols() as f64).sqrt() as usize;
    if side * side != rows.cols() {
        return Ok(false);
    }
    write_image_grid(&dir.join(format!("{stem}.pgm")), rows, side, side, domain)?;
    Ok(true)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let resolved = load_resolved(&args.config, &args.set, args.seed)?;
    let cfg = train_config_from(&resolved)?;
    let dataset = resolve_dataset(&resolved, cfg.seed, true)?;
    let opts = TrainOptions {
        run_dir: Some(args.output.clone()),
        config_echo: resolved.render_ini(),
    };
    let result = train(&cfg, &dataset, &opts)?;
    println!(
        "best epoch {} (validation mean log-likelihood {})",
        result.best_epoch, result.best_valid_ll
    );
    if let Some(reason) = result.aborted {
        return Err(Error::NumericOverflow(format!(
            "training aborted ({reason}); best checkpoint retained in {}",
            args.output.display()
        )));
    }
    Ok(())
}

fn split_rows(dataset: &Dataset, split: SplitName) -> Result<Tensor> {
    let rows = match split {
        SplitName::Train => dataset.train_rows(),
        SplitName::Valid => dataset.valid_rows(),
        SplitName::Test => dataset.test_rows(),
    };
    if rows.rows() == 0 {
        return Err(Error::Config(format!(
            "requested split '{}' is empty",
            split.name()
        )));
    }
    Ok(rows)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let resolved = load_resolved(&args.config, &args.set, args.seed)?;
    if resolved.get("data.whitening") != "none" {
        return Err(Error::Config(
            "eval takes its whitening from the checkpoint; leave data.whitening = none".into(),
        ));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let seed = resolved.parse_u64("train.seed")?;
    let mut dataset = resolve_dataset(&resolved, seed, false)?;
    if dataset.dim() != ckpt.model.dim() {
        return Err(Error::Dimension(format!(
            "dataset dim {} does not match checkpoint dim {}",
            dataset.dim(),
            ckpt.model.dim()
        )));
    }
    if let Some(rec) = &ckpt.whitening {
        dataset = dataset.with_whitening(rec.clone())?;
    }
    let rows = split_rows(&dataset, args.split)?;
    let prior = Prior::new(ckpt.prior, ckpt.model.dim());
    let workers = resolve_workers(&resolved)?;
    let ll = evaluate(
        &ckpt.model,
        &prior,
        &rows,
        dataset.whitening.as_ref(),
        workers,
    )?;
    println!("mean_ll {ll}");
    ensure_output(&args.output)?;
    fs::write(args.output.join("eval.txt"), format!("mean_ll {ll}\n"))?;
    write_echo(&args.output, &resolved.render_ini())?;
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let prior = Prior::new(ckpt.prior, ckpt.model.dim());
    let mut rng = seeded_rng(args.seed).derive("cli.sample");
    let samples = sample_model(
        &ckpt.model,
        &prior,
        ckpt.whitening.as_ref(),
        args.n,
        &mut rng,
    )?;
    ensure_output(&args.output)?;
    let path = save_rows(&args.output, "samples", &samples, args.format)?;
    let wrote_grid = maybe_write_grid(&args.output, "samples", &samples, args.range())?;
    write_echo(
        &args.output,
        &flags_echo(&[
            ("command", "sample".into()),
            ("n", args.n.to_string()),
            ("seed", args.seed.to_string()),
            ("format", args.format.extension().into()),
            ("range", format!("{},{}", args.range().0, args.range().1)),
        ]),
    )?;
    println!(
        "wrote {} samples to {}{}",
        samples.rows(),
        path.display(),
        if wrote_grid { " (+ samples.pgm)" } else { "" }
    );
    Ok(())
}

pub fn cmd_inpaint(args: &InpaintArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dim = ckpt.model.dim();
    let prior = Prior::new(ckpt.prior, dim);
    let task = parse_task_file(&args.task)?;
    let observed = nice_core::data::matrix_io::load_matrix_auto(&task.observed_path)?;
    if observed.cols() != dim {
        return Err(Error::Dimension(format!(
            "observed matrix width {} does not match model dim {dim}",
            observed.cols()
        )));
    }
    let mask = task.build_mask(dim)?;
    let rows: Vec<usize> = if task.row < 0 {
        (0..observed.rows()).collect()
    } else {
        let r = task.row as usize;
        if r >= observed.rows() {
            return Err(Error::Config(format!(
                "task.row {r} out of range for {} observed rows",
                observed.rows()
            )));
        }
        vec![r]
    };

    let mut completed = Tensor::zeros(rows.len(), dim);
    for (k, &r) in rows.iter().enumerate() {
        let t = InpaintTask {
            observed_mask: mask.clone(),
            observed_values: observed.row(r).to_vec(),
            domain: task.domain,
            iterations: task.iterations,
            noise_scale: task.noise_scale,
            // Distinct noise stream per completed row.
            seed: task.seed.wrapping_add(r as u64),
        };
        let out = inpaint(&ckpt.model, &prior, ckpt.whitening.as_ref(), &t)?;
        completed.row_mut(k).copy_from_slice(out.row(0));
    }
    ensure_output(&args.output)?;
    let path = save_rows(&args.output, "completed", &completed, args.format)?;
    maybe_write_grid(&args.output, "completed", &completed, task.domain)?;
    write_echo(
        &args.output,
        &flags_echo(&[
            ("command", "inpaint".into()),
            ("task", args.task.display().to_string()),
            ("rows", rows.len().to_string()),
        ]),
    )?;
    println!("inpainted {} row(s) into {}", rows.len(), path.display());
    Ok(())
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let s = spectrum(&ckpt.model);
    ensure_output(&args.output)?;
    fs::write(args.output.join("spectrum.csv"), s.to_csv())?;
    write_echo(&args.output, &flags_echo(&[("command", "spectrum".into())]))?;
    println!(
        "sigma range [{}, {}], ratio {}",
        s.sigma.last().unwrap(),
        s.sigma[0],
        s.ratio()
    );
    Ok(())
}

pub fn cmd_manifold(args: &ManifoldArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let prior = Prior::new(ckpt.prior, ckpt.model.dim());
    let radius = args.radius.unwrap_or_else(|| prior.kind.component_std());
    let rotation = if args.no_rotation {
        None
    } else {
        Some(args.rotation_seed.unwrap_or(args.seed))
    };
    let points = sphere_manifold(
        &ckpt.model,
        ckpt.whitening.as_ref(),
        rotation,
        args.grid,
        radius,
    )?;
    ensure_output(&args.output)?;
    let path = save_rows(&args.output, "manifold", &points, args.format)?;
    write_echo(
        &args.output,
        &flags_echo(&[
            ("command", "manifold".into()),
            ("grid", args.grid.to_string()),
            ("radius", radius.to_string()),
            (
                "rotation_seed",
                rotation.map_or("none".into(), |s| s.to_string()),
            ),
        ]),
    )?;
    println!("wrote {} manifold points to {}", points.rows(), path.display());
    Ok(())
}

pub fn cmd_whiten(args: &WhitenArgs) -> Result<()> {
    let resolved = load_resolved(&args.config, &args.set, args.seed)?;
    let seed = resolved.parse_u64("train.seed")?;
    let dataset = resolve_dataset(&resolved, seed, false)?;
    let train_rows = dataset.train_rows();
    let record = match args.kind {
        crate::args::WhitenKind::Zca => {
            zca_fit(&train_rows, resolved.parse_f64("data.zca_epsilon")?)?
        }
        crate::args::WhitenKind::Approximate => {
            let mut rng = seeded_rng(seed).derive("data.whitening");
            approx_whitening_fit(
                &train_rows,
                resolved.parse_usize("data.whitening_epochs")?,
                &RmsPropSettings::default(),
                &mut rng,
            )?
            .record
        }
    };
    ensure_output(&args.output)?;
    save_record(&record, &args.output.join("whitening.wht"))?;
    write_echo(&args.output, &resolved.render_ini())?;
    println!(
        "fitted {} whitening on {} rows (log|det| = {})",
        record.kind.name(),
        train_rows.rows(),
        record.log_abs_det
    );
    Ok(())
}
