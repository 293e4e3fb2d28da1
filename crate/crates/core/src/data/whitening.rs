//! Whitening transforms: exact ZCA from a covariance eigendecomposition, and a
//! learned approximate whitening (a lower-triangular affine map trained as a
//! Gaussian density model with RMSProp).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhiteningKind {
    None,
    Zca,
    Approximate,
}

impl WhiteningKind {
    pub fn name(self) -> &'static str {
        match self {
            WhiteningKind::None => "none",
            WhiteningKind::Zca => "zca",
            WhiteningKind::Approximate => "approximate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WhiteningKind::None),
            "zca" => Ok(WhiteningKind::Zca),
            "approximate" => Ok(WhiteningKind::Approximate),
            other => Err(Error::Config(format!("unknown whitening kind '{other}'"))),
        }
    }
}

/// A fitted linear preprocessing map and its volume correction.
///
/// - `Zca`: `z = W (x - mean)` with symmetric `W`; `offset` holds the mean.
/// - `Approximate`: `z = L x + b` with lower-triangular `L`; `offset` holds `b`.
/// - `None`: identity; `transform` and `offset` are empty.
///
/// `log_abs_det` is the log |det| of the linear part, the additive correction
/// between model-space and input-space log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningRecord {
    pub kind: WhiteningKind,
    pub transform: Tensor,
    pub offset: Tensor,
    pub log_abs_det: f64,
    inverse: Tensor,
}

impl WhiteningRecord {
    pub fn none() -> Self {
        Self {
            kind: WhiteningKind::None,
            transform: Tensor::zeros(0, 0),
            offset: Tensor::zeros(0, 1),
            log_abs_det: 0.0,
            inverse: Tensor::zeros(0, 0),
        }
    }

    /// Rebuild a record from its serialized fields. The inverse of the linear
    /// part is recomputed here, so loading a checkpoint and fitting fresh go
    /// through the same code path.
    pub fn from_parts(
        kind: WhiteningKind,
        transform: Tensor,
        offset: Tensor,
        log_abs_det: f64,
    ) -> Result<Self> {
        if kind == WhiteningKind::None {
            return Ok(Self::none());
        }
        let d = transform.rows();
        if transform.cols() != d || offset.shape() != (d, 1) {
            return Err(Error::dimension(format!(
                "whitening transform {}x{} with offset {:?}",
                transform.rows(),
                transform.cols(),
                offset.shape()
            )));
        }
        let m = DMatrix::from_row_slice(d, d, transform.data());
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Numeric("whitening transform is singular".into()))?;
        let inverse = Tensor::new(d, d, inv.transpose().iter().cloned().collect())?;
        // nalgebra stores column-major; transposing the iterator order above
        // yields row-major of the inverse.
        Ok(Self {
            kind,
            transform,
            offset,
            log_abs_det,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.transform.rows()
    }
}

/// Apply the whitening map to a batch of input-space rows.
pub fn apply_whitening(record: &WhiteningRecord, x: &Tensor) -> Result<Tensor> {
    match record.kind {
        WhiteningKind::None => Ok(x.clone()),
        WhiteningKind::Zca => {
            let mean = record.offset.data();
            let centered = x.add_row_broadcast(&mean.iter().map(|m| -m).collect::<Vec<_>>())?;
            centered.matmul_bt(&record.transform)
        }
        WhiteningKind::Approximate => {
            let z = x.matmul_bt(&record.transform)?;
            z.add_row_broadcast(record.offset.data())
        }
    }
}

/// Invert the whitening map on a batch of model-space rows.
pub fn invert_whitening(record: &WhiteningRecord, z: &Tensor) -> Result<Tensor> {
    match record.kind {
        WhiteningKind::None => Ok(z.clone()),
        WhiteningKind::Zca => {
            let x = z.matmul_bt(&record.inverse)?;
            x.add_row_broadcast(record.offset.data())
        }
        WhiteningKind::Approximate => {
            let shifted =
                z.add_row_broadcast(&record.offset.data().iter().map(|b| -b).collect::<Vec<_>>())?;
            shifted.matmul_bt(&record.inverse)
        }
    }
}

/// Pull a model-space gradient back to input space: for `z = M x + c` the
/// input gradient is `M^T grad_z`, i.e. `grad_z * M` in row form.
pub fn whitening_grad_to_input(record: &WhiteningRecord, grad_z: &Tensor) -> Result<Tensor> {
    match record.kind {
        WhiteningKind::None => Ok(grad_z.clone()),
        _ => grad_z.matmul(&record.transform),
    }
}

/// Exact ZCA: `W = U (Lambda + eps I)^(-1/2) U^T` from the eigendecomposition
/// of the training covariance. `log_abs_det = -1/2 sum(log(lambda_i + eps))`.
pub fn zca_fit(train: &Tensor, eps: f64) -> Result<WhiteningRecord> {
    let n = train.rows();
    let d = train.cols();
    if n < 2 {
        return Err(Error::Config(format!(
            "ZCA needs at least 2 rows, got {n}"
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|r| train.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let centered = train.add_row_broadcast(&mean.iter().map(|m| -m).collect::<Vec<_>>())?;
    let cov = centered.matmul_at(&centered)?.scale(1.0 / n as f64);

    let eig = DMatrix::from_row_slice(d, d, cov.data()).symmetric_eigen();
    let mut log_abs_det = 0.0;
    let mut inv_sqrt = Vec::with_capacity(d);
    for i in 0..d {
        let lam = eig.eigenvalues[i] + eps;
        if !lam.is_finite() || lam <= 0.0 {
            return Err(Error::Numeric(format!(
                "covariance eigenvalue {} not positive after regularization",
                eig.eigenvalues[i]
            )));
        }
        log_abs_det -= 0.5 * lam.ln();
        inv_sqrt.push(1.0 / lam.sqrt());
    }
    // W = U diag(inv_sqrt) U^T
    let u = &eig.eigenvectors;
    let mut w = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for (k, scale) in inv_sqrt.iter().enumerate() {
                s += u[(i, k)] * scale * u[(j, k)];
            }
            w[i * d + j] = s;
        }
    }
    WhiteningRecord::from_parts(
        WhiteningKind::Zca,
        Tensor::new(d, d, w)?,
        Tensor::col_vector(&mean),
        log_abs_det,
    )
}

pub const WHITENING_MAGIC: &[u8; 8] = b"NICEWHT1";

/// Standalone record file ("NICEWHT1"): magic, kind byte (0 none, 1 zca,
/// 2 approximate), u32 LE dim, transform, offset, log_abs_det — floats
/// little-endian f64.
pub fn save_record(record: &WhiteningRecord, path: &std::path::Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(WHITENING_MAGIC);
    bytes.push(match record.kind {
        WhiteningKind::None => 0,
        WhiteningKind::Zca => 1,
        WhiteningKind::Approximate => 2,
    });
    bytes.extend_from_slice(&(record.dim() as u32).to_le_bytes());
    for v in record.transform.data().iter().chain(record.offset.data()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&record.log_abs_det.to_le_bytes());
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_record(path: &std::path::Path) -> Result<WhiteningRecord> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 13 {
        return Err(Error::format(0, "file shorter than the NICEWHT1 header"));
    }
    if &bytes[..8] != WHITENING_MAGIC {
        return Err(Error::format(0, "bad magic, expected NICEWHT1"));
    }
    let kind = match bytes[8] {
        0 => WhiteningKind::None,
        1 => WhiteningKind::Zca,
        2 => WhiteningKind::Approximate,
        other => return Err(Error::format(8, format!("unknown whitening kind {other}"))),
    };
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let want = 13 + (d * d + d + 1) * 8;
    if bytes.len() != want {
        return Err(Error::format(
            13,
            format!("expected {want} bytes for dim {d}, got {}", bytes.len()),
        ));
    }
    let mut floats = bytes[13..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let transform = Tensor::new(d, d, floats.by_ref().take(d * d).collect())?;
    let offset = Tensor::new(d, 1, floats.by_ref().take(d).collect())?;
    let log_abs_det = floats.next().unwrap();
    WhiteningRecord::from_parts(kind, transform, offset, log_abs_det)
}

/// RMSProp settings for the approximate-whitening fit.
#[derive(Debug, Clone)]
pub struct RmsPropSettings {
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Early stopping: epochs without validation improvement before halting.
    pub patience: usize,
}

impl Default for RmsPropSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9,
            momentum: 0.9,
            epsilon: 1e-8,
            batch_size: 128,
            patience: 10,
        }
    }
}

/// Result of the approximate-whitening fit, with the per-epoch loss curves
/// kept for inspection.
#[derive(Debug, Clone)]
pub struct ApproxFit {
    pub record: WhiteningRecord,
    pub train_nll: Vec<f64>,
    pub valid_nll: Vec<f64>,
    pub best_epoch: usize,
}

struct TriangularParams {
    dim: usize,
    /// Strictly-lower entries, row-major over (i, j) with j < i.
    strict: Vec<f64>,
    /// Log magnitudes of the diagonal; the diagonal itself is `exp(log_diag)`,
    /// so `L` stays invertible throughout training.
    log_diag: Vec<f64>,
    bias: Vec<f64>,
}

impl TriangularParams {
    fn identity(dim: usize) -> Self {
        Self {
            dim,
            strict: vec![0.0; dim * (dim - 1) / 2],
            log_diag: vec![0.0; dim],
            bias: vec![0.0; dim],
        }
    }

    fn strict_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j < i);
        i * (i - 1) / 2 + j
    }

    fn lower_matrix(&self) -> Tensor {
        let d = self.dim;
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                l[i * d + j] = self.strict[self.strict_index(i, j)];
            }
            l[i * d + i] = self.log_diag[i].exp();
        }
        Tensor::new(d, d, l).unwrap()
    }

    fn flat_len(&self) -> usize {
        self.strict.len() + self.log_diag.len() + self.bias.len()
    }
}

/// Mean negative log-likelihood of `rows` under `z = Lx + b` with a standard
/// Gaussian on `z`, including the `sum(log |L_ii|)` volume term.
fn gaussian_affine_nll(params: &TriangularParams, rows: &Tensor) -> f64 {
    let l = params.lower_matrix();
    let d = params.dim;
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for r in 0..rows.rows() {
        let x = rows.row(r);
        for i in 0..d {
            let mut z = params.bias[i];
            for (j, &xj) in x.iter().enumerate().take(i + 1) {
                z += l.get(i, j) * xj;
            }
            total += 0.5 * z * z + half_ln_2pi;
        }
    }
    total / rows.rows() as f64 - params.log_diag.iter().sum::<f64>()
}

/// Learn an approximate whitening `z = Lx + b` by maximizing the Gaussian
/// log-likelihood with RMSProp plus momentum and validation early stopping.
pub fn approx_whitening_fit(
    train: &Tensor,
    epochs: usize,
    settings: &RmsPropSettings,
    rng: &mut RngStream,
) -> Result<ApproxFit> {
    let n = train.rows();
    let d = train.cols();
    if n < 2 {
        return Err(Error::Config(format!(
            "approximate whitening needs at least 2 rows, got {n}"
        )));
    }
    // Hold out the trailing 10% (at least one row) for early stopping.
    let n_valid = (n / 10).max(1);
    let n_fit = n - n_valid;
    let fit_rows = train.slice_rows(0..n_fit);
    let valid_rows = train.slice_rows(n_fit..n);

    let mut params = TriangularParams::identity(d);
    let flat = params.flat_len();
    let mut acc = vec![0.0; flat];
    let mut vel = vec![0.0; flat];

    let mut best_params = params.lower_matrix();
    let mut best_bias = params.bias.clone();
    let mut best_log_det: f64 = params.log_diag.iter().sum();
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;

    let mut train_curve = Vec::new();
    let mut valid_curve = Vec::new();
    let mut order: Vec<usize> = (0..n_fit).collect();

    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut start = 0;
        while start < n_fit {
            let end = (start + settings.batch_size).min(n_fit);
            let batch = fit_rows.gather_rows(&order[start..end]);
            let b = batch.rows() as f64;
            let l = params.lower_matrix();

            // Ascent gradient of the mean log-likelihood.
            let mut g = vec![0.0; flat];
            let (g_strict, rest) = g.split_at_mut(params.strict.len());
            let (g_diag, g_bias) = rest.split_at_mut(d);
            for r in 0..batch.rows() {
                let x = batch.row(r);
                for i in 0..d {
                    let mut z = params.bias[i];
                    for (j, &xj) in x.iter().enumerate().take(i + 1) {
                        z += l.get(i, j) * xj;
                    }
                    for j in 0..i {
                        g_strict[params.strict_index(i, j)] += -z * x[j] / b;
                    }
                    g_diag[i] += -z * x[i] * l.get(i, i) / b;
                    g_bias[i] += -z / b;
                }
            }
            for gd in g_diag.iter_mut() {
                *gd += 1.0; // d/d log_diag of sum(log |L_ii|)
            }

            let theta: Vec<&mut f64> = params
                .strict
                .iter_mut()
                .chain(params.log_diag.iter_mut())
                .chain(params.bias.iter_mut())
                .collect();
            for (idx, t) in theta.into_iter().enumerate() {
                let grad = g[idx];
                acc[idx] = settings.decay * acc[idx] + (1.0 - settings.decay) * grad * grad;
                let step = settings.learning_rate * grad / (acc[idx] + settings.epsilon).sqrt();
                vel[idx] = settings.momentum * vel[idx] + step;
                *t += vel[idx];
            }
            start = end;
        }

        train_curve.push(gaussian_affine_nll(&params, &fit_rows));
        let valid_nll = gaussian_affine_nll(&params, &valid_rows);
        valid_curve.push(valid_nll);
        if valid_nll < best_valid {
            best_valid = valid_nll;
            best_params = params.lower_matrix();
            best_bias = params.bias.clone();
            best_log_det = params.log_diag.iter().sum();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > settings.patience {
                break;
            }
        }
    }

    let record = WhiteningRecord::from_parts(
        WhiteningKind::Approximate,
        best_params,
        Tensor::col_vector(&best_bias),
        best_log_det,
    )?;
    Ok(ApproxFit {
        record,
        train_nll: train_curve,
        valid_nll: valid_curve,
        best_epoch,
    })
}
