//! CLI contract tests: exit codes, help completeness, config echo, and
//! rerun-and-diff determinism of the file outputs.

use std::path::Path;
use std::process::Command;

use nice_core::checkpoint::Checkpoint;
use nice_core::data::matrix_io::{load_matrix, save_matrix_csv};
use nice_core::{identity_reference_model, PriorKind, Tensor};

fn nice_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nice"))
}

fn write_identity_checkpoint(path: &Path, dim: usize, prior: PriorKind) {
    Checkpoint {
        model: identity_reference_model(dim).unwrap(),
        prior,
        whitening: None,
        optimizer: None,
        step_counter: 0,
        config_echo: String::new(),
    }
    .save(path)
    .unwrap();
}

#[test]
fn help_lists_every_config_key_with_default() {
    let out = nice_bin().args(["train", "--help"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for spec in nice_cli::config_file::SCHEMA {
        assert!(text.contains(spec.key), "help missing {}", spec.key);
    }
    assert!(text.contains("default"));
}

#[test]
fn usage_errors_exit_one() {
    let out = nice_bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Unknown config key: fail-closed with a diagnostic on stderr.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    std::fs::write(&cfg, "[train]\nwarp_speed = 9\n").unwrap();
    let out = nice_bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().count() == 1 && err.contains("warp_speed"), "{err}");
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Missing checkpoint file.
    let out = nice_bin()
        .args(["spectrum", "--checkpoint"])
        .arg(dir.path().join("missing.ckpt"))
        .arg("--output")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Corrupted magic.
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"NOTACKPT").unwrap();
    let out = nice_bin()
        .args(["spectrum", "--checkpoint"])
        .arg(&bad)
        .arg("--output")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("format"));
}

#[test]
fn numeric_failure_exits_three_and_keeps_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    std::fs::write(
        &cfg,
        "[data]\nsource = toy2d-mixture\nn = 300\n\n[model]\nhidden_units = 8\nhidden_layers = 1\n\n\
         [train]\nmax_epochs = 20\nbatch_size = 64\nlearning_rate = 1e12\nseed = 2\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = nice_bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("best.ckpt").exists());
}

#[test]
fn eval_identity_fixture_prints_prior_log_density() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("identity.ckpt");
    write_identity_checkpoint(&ckpt, 2, PriorKind::Gaussian);

    let data = dir.path().join("origin.csv");
    save_matrix_csv(&data, &Tensor::zeros(3, 2)).unwrap();
    let cfg = dir.path().join("c.ini");
    std::fs::write(
        &cfg,
        format!(
            "[data]\nsource = csv\npath = {}\nvalid_count = 0\ntest_count = 3\n\
             domain_lo = -1\ndomain_hi = 1\n",
            data.display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = nice_bin()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--config"])
        .arg(&cfg)
        .args(["--split", "test", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let value: f64 = stdout
        .trim()
        .strip_prefix("mean_ll ")
        .unwrap()
        .parse()
        .unwrap();
    let want = -(2.0 * std::f64::consts::PI).ln();
    assert!((value - want).abs() < 1e-12, "{value} vs {want}");
    // Also written to the output file, with the config echoed alongside.
    let file = std::fs::read_to_string(out_dir.join("eval.txt")).unwrap();
    assert_eq!(file.trim(), stdout.trim());
    let echo = std::fs::read_to_string(out_dir.join("config")).unwrap();
    assert!(echo.contains("source = csv"));
    assert!(echo.contains("batch_size = 256"));
}

#[test]
fn sample_writes_matrix_and_square_grid() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("id784.ckpt");
    write_identity_checkpoint(&ckpt, 784, PriorKind::Logistic);
    let out_dir = dir.path().join("out");
    let out = nice_bin()
        .args(["sample", "--checkpoint"])
        .arg(&ckpt)
        .args(["-n", "16", "--seed", "5", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = load_matrix(&out_dir.join("samples.mat")).unwrap();
    assert_eq!(samples.shape(), (16, 784));
    // 16 images of 28x28 tile into a 4x4 grid.
    let pgm = std::fs::read(out_dir.join("samples.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n112 112\n255\n"));
}

#[test]
fn sample_rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("id.ckpt");
    write_identity_checkpoint(&ckpt, 4, PriorKind::Logistic);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let status = nice_bin()
            .args(["sample", "--checkpoint"])
            .arg(&ckpt)
            .args(["-n", "32", "--seed", "9", "--output"])
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        bytes.push(std::fs::read(out_dir.join("samples.mat")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn worker_env_variable_does_not_change_training_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    std::fs::write(
        &cfg,
        "[data]\nsource = toy2d-mixture\nn = 800\n\n[model]\nhidden_units = 8\nhidden_layers = 1\n\n\
         [train]\nmax_epochs = 3\nbatch_size = 100\nseed = 6\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (name, workers) in [("serial", "1"), ("pool", "3")] {
        let run = dir.path().join(name);
        let status = nice_bin()
            .env("NICE_NUM_WORKERS", workers)
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(&run)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(run.join("metrics.log")).unwrap(),
            std::fs::read(run.join("best.ckpt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "metrics differ across worker pools");
    assert_eq!(outputs[0].1, outputs[1].1, "checkpoints differ across worker pools");
}

#[test]
fn whiten_subcommand_writes_a_loadable_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    std::fs::write(
        &cfg,
        "[data]\nsource = toy2d-mixture\nn = 500\n\n[train]\nseed = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = nice_bin()
        .args(["whiten", "--config"])
        .arg(&cfg)
        .args(["--kind", "zca", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = nice_core::data::whitening::load_record(&out_dir.join("whitening.wht")).unwrap();
    assert_eq!(rec.dim(), 2);
    assert!(rec.log_abs_det.is_finite());
}

#[test]
fn inpaint_clamps_observed_and_writes_completions() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("id.ckpt");
    write_identity_checkpoint(&ckpt, 4, PriorKind::Gaussian);
    let observed = dir.path().join("obs.csv");
    save_matrix_csv(
        &observed,
        &Tensor::new(2, 4, vec![0.4, 0.0, -0.7, 0.0, 0.1, 0.0, 0.2, 0.0]).unwrap(),
    )
    .unwrap();
    let task = dir.path().join("task.ini");
    std::fs::write(
        &task,
        format!(
            "[task]\nmask = indices:1,3\niterations = 100\nnoise_scale = 0.5\nseed = 4\n\
             domain_lo = -2\ndomain_hi = 2\nobserved = {}\nrow = -1\n",
            observed.display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = nice_bin()
        .args(["inpaint", "--checkpoint"])
        .arg(&ckpt)
        .args(["--task"])
        .arg(&task)
        .args(["--format", "csv", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let completed = nice_core::data::matrix_io::load_matrix_csv(&out_dir.join("completed.csv")).unwrap();
    assert_eq!(completed.shape(), (2, 4));
    // Observed coordinates unchanged, hidden ones inside the domain.
    assert_eq!(completed.get(0, 0), 0.4);
    assert_eq!(completed.get(0, 2), -0.7);
    assert_eq!(completed.get(1, 0), 0.1);
    for r in 0..2 {
        for c in [1, 3] {
            assert!(completed.get(r, c).abs() <= 2.0);
        }
    }
}

#[test]
fn manifold_emits_grid_squared_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("id.ckpt");
    write_identity_checkpoint(&ckpt, 6, PriorKind::Logistic);
    let out_dir = dir.path().join("out");
    let out = nice_bin()
        .args(["manifold", "--checkpoint"])
        .arg(&ckpt)
        .args(["--grid", "5", "--output"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let points = load_matrix(&out_dir.join("manifold.mat")).unwrap();
    assert_eq!(points.shape(), (25, 6));
}
