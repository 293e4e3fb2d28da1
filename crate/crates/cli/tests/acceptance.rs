//! Acceptance suite: one test per criterion, each ending with a PASS line.
//! Run with `cargo test -p nice-cli --test acceptance -- --nocapture` to see
//! the per-criterion lines.

mod common;

use std::time::Instant;

use common::{desk_scale_dataset, trained_toy};
use nalgebra::DMatrix;
use nice_core::data::toy2d::toy2d_log_density;
use nice_core::data::whitening::{apply_whitening, approx_whitening_fit, RmsPropSettings};
use nice_core::data::Toy2dKind;
use nice_core::infer::{inpaint, log_density, spectrum, InpaintTask};
use nice_core::train::{nice_loss, train, TrainConfig, TrainOptions};
use nice_core::{
    evaluate, flow_forward, flow_inverse, identity_reference_model, make_reference_model,
    seeded_rng, Prior, PriorKind, Tensor,
};

fn pass(n: u32, name: &str) {
    println!("acceptance criterion {n} ({name}): PASS");
}

#[test]
fn criterion_01_invertibility() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut models = 0;
    for (dim, count, units) in [(2usize, 40u64, 16usize), (6, 40, 16), (784, 20, 32)] {
        for seed in 0..count {
            let model = make_reference_model(dim, 1, units, seed * 31 + dim as u64).unwrap();
            let mut rng = seeded_rng(seed ^ 0xabcd);
            let x = Tensor::from_fn(100, dim, |_, _| rng.uniform() * 20.0 - 10.0);
            let (h, _, _) = flow_forward(&model, &x).unwrap();
            let back = flow_inverse(&model, &h).unwrap();
            worst = worst.max(back.max_abs_diff(&x));
            models += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert_eq!(models, 100);
    assert!(
        worst < 1e-9,
        "max round-trip error {worst} across {models} models"
    );
    assert!(elapsed < 60.0, "invertibility suite took {elapsed}s");
    pass(1, "invertibility");
}

#[test]
fn criterion_02_log_det_exactness() {
    for (dim, seed) in [(2usize, 1u64), (4, 2), (6, 3), (8, 4)] {
        let model = make_reference_model(dim, 2, 12, seed).unwrap();
        let mut rng = seeded_rng(seed + 100);
        let x = rng.normal_tensor(1, dim);
        let (_, analytic, _) = flow_forward(&model, &x).unwrap();

        let eps = 1e-5;
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut plus = x.clone();
            plus.set(0, j, x.get(0, j) + eps);
            let mut minus = x.clone();
            minus.set(0, j, x.get(0, j) - eps);
            let (hp, _, _) = flow_forward(&model, &plus).unwrap();
            let (hm, _, _) = flow_forward(&model, &minus).unwrap();
            for i in 0..dim {
                jac[(i, j)] = (hp.get(0, i) - hm.get(0, i)) / (2.0 * eps);
            }
        }
        let numeric = jac.lu().determinant().abs().ln();
        let rel = (analytic - numeric).abs() / analytic.abs().max(1e-3);
        assert!(rel < 1e-4, "dim {dim}: analytic {analytic} vs LU {numeric}");
    }
    pass(2, "log-det exactness");
}

#[test]
fn criterion_03_gradient_suite() {
    let started = Instant::now();
    let dim = 6;
    let mut model = make_reference_model(dim, 2, 32, 9).unwrap();
    let prior = Prior::new(PriorKind::Logistic, dim);
    let mut rng = seeded_rng(90);
    let batch = rng.normal_tensor(8, dim);
    let (_, grads) = nice_loss(&model, &prior, &batch).unwrap();
    let grad_tensors: Vec<Tensor> = grads.param_tensors().into_iter().cloned().collect();

    let eps = 1e-5;
    let mut checked = 0usize;
    #[allow(clippy::needless_range_loop)]
    for p in 0..grad_tensors.len() {
        for idx in 0..grad_tensors[p].data().len() {
            let orig = model.param_tensors_mut()[p].data()[idx];
            model.param_tensors_mut()[p].data_mut()[idx] = orig + eps;
            let (plus, _) = nice_loss(&model, &prior, &batch).unwrap();
            model.param_tensors_mut()[p].data_mut()[idx] = orig - eps;
            let (minus, _) = nice_loss(&model, &prior, &batch).unwrap();
            model.param_tensors_mut()[p].data_mut()[idx] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            if fd.abs() < 1e-8 {
                continue;
            }
            let analytic = grad_tensors[p].data()[idx];
            let diff = (analytic - fd).abs();
            assert!(
                diff < 1e-9 || diff / fd.abs() < 1e-5,
                "param {p} idx {idx}: analytic {analytic} vs fd {fd}"
            );
            checked += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    // ReLU-dead paths legitimately produce zero gradients and are skipped,
    // but the bulk of the parameters must actually get compared.
    assert!(checked > 3000, "only {checked} comparisons ran");
    assert!(elapsed < 60.0, "gradient suite took {elapsed}s");
    pass(3, "gradient suite");
}

#[test]
fn criterion_04_normalization_by_quadrature() {
    let toy = trained_toy();
    let ckpt = &toy.result.checkpoint;
    let prior = Prior::new(ckpt.prior, 2);

    let n = 400;
    let (lo, hi) = (-8.0f64, 8.0f64);
    let step = (hi - lo) / n as f64;
    let mut mass = 0.0;
    // Evaluate the grid in row batches to keep memory flat.
    for i in 0..n {
        let mut rows = Tensor::zeros(n, 2);
        for j in 0..n {
            rows.set(j, 0, lo + (i as f64 + 0.5) * step);
            rows.set(j, 1, lo + (j as f64 + 0.5) * step);
        }
        let logps = log_density(&ckpt.model, &prior, None, &rows).unwrap();
        mass += logps.iter().map(|lp| lp.exp()).sum::<f64>() * step * step;
    }
    assert!(
        (0.98..=1.02).contains(&mass),
        "quadrature mass {mass} outside [0.98, 1.02]"
    );
    pass(4, "normalization");
}

#[test]
fn criterion_05_density_recovery() {
    let toy = trained_toy();
    let ckpt = &toy.result.checkpoint;
    let prior = Prior::new(ckpt.prior, 2);
    let test_rows = toy.dataset.test_rows();

    let model_ll = evaluate(&ckpt.model, &prior, &test_rows, None, 2).unwrap();
    let true_ll: f64 = (0..test_rows.rows())
        .map(|r| {
            toy2d_log_density(
                Toy2dKind::GaussianMixture,
                test_rows.get(r, 0),
                test_rows.get(r, 1),
            )
        })
        .sum::<f64>()
        / test_rows.rows() as f64;
    let gap = (model_ll - true_ll).abs();
    assert!(
        gap <= 0.15,
        "model test LL {model_ll} vs generating-density LL {true_ll} (gap {gap})"
    );
    pass(5, "density recovery");
}

#[test]
fn criterion_06_prior_correctness() {
    let prior = Prior::new(PriorKind::Logistic, 1);
    let at_zero = prior.log_density(&Tensor::row_vector(&[0.0])).unwrap();
    assert!(
        (at_zero - (-2.0 * 2f64.ln())).abs() < 1e-12,
        "logistic log-density at 0: {at_zero}"
    );

    // Per-component quadrature normalization over [-30, 30] (Simpson).
    let n = 6000;
    let (lo, hi) = (-30.0, 30.0);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| prior.log_density(&Tensor::row_vector(&[x])).unwrap().exp();
    let mut total = f(lo) + f(hi);
    for i in 1..n {
        total += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total *= h / 3.0;
    assert!((total - 1.0).abs() < 1e-6, "quadrature mass {total}");

    let mut rng = seeded_rng(600);
    let n_draws = 1_000_000;
    let draws = prior.sample(n_draws, &mut rng);
    let mean = draws.sum() / n_draws as f64;
    let var = draws
        .data()
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n_draws as f64;
    let want = std::f64::consts::PI.powi(2) / 3.0;
    assert!(
        (var - want).abs() / want < 0.02,
        "sample variance {var} vs {want}"
    );
    pass(6, "prior correctness");
}

#[test]
fn criterion_07_inpainting_oracle() {
    let toy = trained_toy();
    let ckpt = &toy.result.checkpoint;
    let prior = Prior::new(ckpt.prior, 2);
    let test_rows = toy.dataset.test_rows();
    let domain = toy.dataset.domain;

    // Model's own conditional argmax over the hidden coordinate by 1D grid
    // search at 1e-3 resolution.
    let grid_argmax = |x0: f64| -> f64 {
        let resolution = 1e-3;
        let count = ((domain.1 - domain.0) / resolution).round() as usize + 1;
        let mut best = (f64::NEG_INFINITY, domain.0);
        // Batched evaluation of the whole grid line.
        let chunk = 4096;
        let mut start = 0;
        while start < count {
            let end = (start + chunk).min(count);
            let rows = Tensor::from_fn(end - start, 2, |r, c| {
                if c == 0 {
                    x0
                } else {
                    domain.0 + (start + r) as f64 * resolution
                }
            });
            let lps = log_density(&ckpt.model, &prior, None, &rows).unwrap();
            for (k, lp) in lps.iter().enumerate() {
                if *lp > best.0 {
                    best = (*lp, domain.0 + (start + k) as f64 * resolution);
                }
            }
            start = end;
        }
        best.1
    };

    let mut successes = 0;
    let trials = 20;
    for t in 0..trials {
        let x0 = test_rows.get(t, 0);
        let oracle = grid_argmax(x0);
        let task = InpaintTask {
            observed_mask: vec![true, false],
            observed_values: vec![x0, 0.0],
            domain,
            iterations: 5000,
            noise_scale: 1.0,
            seed: 700 + t as u64,
        };
        let out = inpaint(&ckpt.model, &prior, None, &task).unwrap();
        let got = out.get(0, 1);
        if (got - oracle).abs() <= 0.05 {
            successes += 1;
        } else {
            println!(
                "  trial {t}: observed {x0:.3}, ascent {got:.4} vs grid argmax {oracle:.4}"
            );
        }
    }
    assert!(
        successes >= 18,
        "only {successes}/{trials} inpainting runs landed within 0.05 of the grid argmax"
    );
    pass(7, "inpainting oracle");
}

#[test]
fn criterion_08_desk_scale_images() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (dataset, source) = desk_scale_dataset(tmp.path(), 12_000, 2_000, 801);
    assert_eq!(dataset.splits.train.len(), 10_000);
    assert_eq!(dataset.dim(), 784);

    let cfg = TrainConfig {
        max_epochs: 30,
        batch_size: 64,
        learning_rate: 3e-3,
        hidden_layers: 2,
        hidden_units: 256,
        prior: PriorKind::Logistic,
        seed: 80,
        workers: 2,
        ..TrainConfig::default()
    };
    let result = train(&cfg, &dataset, &TrainOptions::default()).unwrap();
    assert!(result.aborted.is_none(), "training aborted: {:?}", result.aborted);

    let epoch1_ll = result.metrics[1].valid_ll;
    let best_ll = result.best_valid_ll;
    let improvement = best_ll - epoch1_ll;

    // Untrained identity-flow baseline on the same validation rows.
    let prior = Prior::new(PriorKind::Logistic, 784);
    let baseline = evaluate(
        &identity_reference_model(784).unwrap(),
        &prior,
        &dataset.valid_rows(),
        None,
        2,
    )
    .unwrap();

    let spec = spectrum(&result.checkpoint.model);
    let ratio = spec.ratio();
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "  desk-scale[{source}]: epoch1 {epoch1_ll:.1}, best {best_ll:.1} (epoch {}), \
         baseline {baseline:.1}, sigma ratio {ratio:.1}, {elapsed:.0}s",
        result.best_epoch
    );
    assert!(
        improvement >= 200.0,
        "validation LL improved only {improvement} nats from epoch 1"
    );
    assert!(best_ll > 0.0, "final validation LL {best_ll} not positive");
    assert!(
        best_ll > baseline,
        "trained LL {best_ll} does not beat identity baseline {baseline}"
    );
    assert!(ratio >= 10.0, "spectrum ratio {ratio} below 10");
    assert!(elapsed < 7200.0, "desk-scale run took {elapsed}s");
    pass(8, "desk-scale images");
}

#[test]
fn criterion_09_train_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("toy.ini");
    std::fs::write(
        &config_path,
        "[data]\nsource = toy2d-mixture\nn = 1500\n\n[model]\nhidden_units = 16\n\
         hidden_layers = 1\n\n[train]\nmax_epochs = 5\nbatch_size = 128\nseed = 99\n",
    )
    .unwrap();
    let mut artifacts = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let code = nice_cli::run([
            "nice",
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "train exited with {code}");
        artifacts.push((
            std::fs::read(out.join("metrics.log")).unwrap(),
            std::fs::read(out.join("best.ckpt")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "metrics logs differ");
    assert_eq!(artifacts[0].1, artifacts[1].1, "best checkpoints differ");
    pass(9, "determinism");
}

#[test]
fn criterion_10_approximate_whitening() {
    // Synthetic 2D Gaussian with covariance [[4, 1], [1, 2]].
    let n = 20_000;
    let mut rng = seeded_rng(1000);
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let z0 = rng.normal();
        let z1 = rng.normal();
        data.push(2.0 * z0);
        data.push(0.5 * z0 + (2.0f64 - 0.25).sqrt() * z1);
    }
    let data = Tensor::new(n, 2, data).unwrap();

    let started = Instant::now();
    let fit = approx_whitening_fit(&data, 400, &RmsPropSettings::default(), &mut rng).unwrap();
    let model = identity_reference_model(2).unwrap();
    let prior = Prior::new(PriorKind::Gaussian, 2);
    let white = apply_whitening(&fit.record, &data).unwrap();
    let learned_ll = evaluate(&model, &prior, &white, Some(&fit.record), 1).unwrap();

    // Closed-form Gaussian MLE log-likelihood on the same rows.
    let mean: Vec<f64> = (0..2)
        .map(|c| (0..n).map(|r| data.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let mut cov = [[0.0f64; 2]; 2];
    for r in 0..n {
        let dx = data.get(r, 0) - mean[0];
        let dy = data.get(r, 1) - mean[1];
        cov[0][0] += dx * dx;
        cov[0][1] += dx * dy;
        cov[1][1] += dy * dy;
    }
    let nf = n as f64;
    let det = (cov[0][0] / nf) * (cov[1][1] / nf) - (cov[0][1] / nf).powi(2);
    let mle_ll = -((2.0 * std::f64::consts::PI).ln() + 1.0) - 0.5 * det.ln();

    let gap = (learned_ll - mle_ll).abs() / mle_ll.abs();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        gap < 0.01,
        "learned LL {learned_ll} vs Gaussian MLE {mle_ll} (relative gap {gap})"
    );
    assert!(elapsed < 60.0, "whitening fit took {elapsed}s");
    pass(10, "approximate whitening");
}
