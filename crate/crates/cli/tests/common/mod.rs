//! Shared fixtures for the CLI test suites: a synthetic digit corpus that
//! exercises the IDX pipeline at MNIST geometry, and a lazily trained toy
//! model reused by the criteria that need one.

use std::path::Path;
use std::sync::OnceLock;

use nice_core::data::dequantize::{dequantize, DequantizeTarget};
use nice_core::data::toy2d::{make_toy2d, Toy2dKind};
use nice_core::data::{load_mnist_idx, write_idx_images, Splits};
use nice_core::train::{train, TrainConfig, TrainOptions};
use nice_core::{seeded_rng, Dataset, PriorKind, Tensor, TrainResult};

/// Synthetic 28x28 grayscale images: a few soft blobs per image, integer
/// pixel values in 0..=255, mostly-black borders. Structured enough for the
/// flow to find a low-dimensional manifold, nothing more.
pub fn synthetic_digits(n: usize, seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed).derive("synthetic-digits");
    let side = 28usize;
    let mut images = Tensor::zeros(n, side * side);
    for img in 0..n {
        let blobs = 2 + rng.next_below(3) as usize;
        let mut intensity = vec![0.0f64; side * side];
        for _ in 0..blobs {
            let cx = 7.0 + 14.0 * rng.uniform();
            let cy = 7.0 + 14.0 * rng.uniform();
            let sigma = 1.5 + 2.0 * rng.uniform();
            let amp = 0.5 + 0.5 * rng.uniform();
            for y in 0..side {
                for x in 0..side {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    intensity[y * side + x] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        let row = images.row_mut(img);
        for (p, v) in row.iter_mut().zip(&intensity) {
            *p = (v.min(1.0) * 255.0).round();
        }
    }
    images
}

/// Image dataset for the desk-scale run: real MNIST when `NICE_MNIST_DIR`
/// points at the IDX files, otherwise the synthetic corpus written to (and
/// read back through) the same IDX pipeline. Returns the dataset and a label
/// for reporting.
pub fn desk_scale_dataset(tmp: &Path, n: usize, valid: usize, seed: u64) -> (Dataset, &'static str) {
    let (raw, source) = match std::env::var("NICE_MNIST_DIR") {
        Ok(dir) => {
            let images = Path::new(&dir).join("train-images-idx3-ubyte");
            let (raw, _) = load_mnist_idx(&images, None).expect("loading MNIST from NICE_MNIST_DIR");
            (raw.slice_rows(0..n), "mnist")
        }
        Err(_) => {
            let digits = synthetic_digits(n, seed);
            let path = tmp.join("digits.idx");
            write_idx_images(&path, &digits, 28, 28).unwrap();
            let (raw, _) = load_mnist_idx(&path, None).unwrap();
            (raw, "synthetic")
        }
    };
    let mut rng = seeded_rng(seed).derive("data.dequantize");
    let examples = dequantize(&raw, DequantizeTarget::Unit, &mut rng).unwrap();
    let rows = examples.rows();
    let ds = Dataset::new(examples, Splits::new(rows, valid, 0).unwrap(), (0.0, 1.0)).unwrap();
    (ds, source)
}

pub struct ToyFixture {
    pub dataset: Dataset,
    pub result: TrainResult,
}

static TOY: OnceLock<ToyFixture> = OnceLock::new();

/// The 2D mixture model trained for 50 epochs, shared across criteria.
pub fn trained_toy() -> &'static ToyFixture {
    TOY.get_or_init(|| {
        let mut rng = seeded_rng(410);
        let dataset = make_toy2d(Toy2dKind::GaussianMixture, 60_000, &mut rng).unwrap();
        // Batch 128 at lr 1e-3 keeps the optimizer endpoint quiet enough that
        // the learned density is smooth; noisier configs leave piecewise-linear
        // ripples that derail the inpainting ascent.
        let cfg = TrainConfig {
            max_epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            hidden_layers: 2,
            hidden_units: 48,
            prior: PriorKind::Logistic,
            seed: 41,
            workers: 2,
            ..TrainConfig::default()
        };
        let result = train(&cfg, &dataset, &TrainOptions::default()).unwrap();
        ToyFixture { dataset, result }
    })
}
