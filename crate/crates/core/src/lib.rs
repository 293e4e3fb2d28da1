//! Additive-coupling normalizing flow with exact maximum-likelihood training.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`rng`], [`mlp`]: dense 64-bit arithmetic, deterministic
//!   random streams, and rectifier MLPs with hand-derived gradients.
//! - [`flow`]: coupling layers, the diagonal scaling layer, and the invertible
//!   stack with exact log-determinant accounting.
//! - [`prior`]: factorized logistic / Gaussian latent densities.
//! - [`data`]: ingestion, dequantization, whitening, and synthetic corpora.
//! - [`train`]: the exact-likelihood criterion, the Adam optimizer, and the
//!   epoch loop with validation-based model selection.
//! - [`infer`]: ancestral sampling, MAP inpainting, spectrum, and manifold
//!   export.
//! - [`checkpoint`]: bit-exact model serialization.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod flow;
pub mod infer;
pub mod mlp;
pub mod pgm;
pub mod prior;
pub mod rng;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::Dataset;
pub use error::{Error, Result};
pub use flow::{
    coupling_forward, coupling_inverse, flow_backward, flow_forward, flow_inverse,
    identity_reference_model, make_reference_model, CouplingLaw, CouplingLayer, FlowGrads,
    FlowModel, FlowTape, Partition, ScalingLayer,
};
pub use mlp::{mlp_backward, mlp_forward, GradientTape, MlpParams};
pub use prior::{Prior, PriorKind};
pub use rng::{seeded_rng, RngStream};
pub use tensor::Tensor;
pub use train::{evaluate, nice_loss, train, TrainConfig, TrainOptions, TrainResult};
