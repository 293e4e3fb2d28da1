//! The exact-likelihood training criterion and its gradients.
//!
//! The loss of a batch is the negative mean log-likelihood
//! `-(1/B) sum_b [log p_H(f(x_b)) + sum_i s_i]`. Batches are processed in
//! fixed-size chunks whose partial results are reduced in chunk order, so the
//! result is bitwise identical for any worker count, including one.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::flow::{flow_backward, flow_forward, FlowGrads, FlowModel};
use crate::prior::Prior;
use crate::tensor::Tensor;

/// Rows per reduction chunk. Fixed: changing it changes summation order and
/// therefore the low bits of results.
const CHUNK_ROWS: usize = 32;

struct ChunkOutcome {
    log_lik_sum: f64,
    grads: Option<FlowGrads>,
}

fn process_chunk(
    model: &FlowModel,
    prior: &Prior,
    chunk: &Tensor,
    batch_rows: usize,
    want_grads: bool,
) -> Result<ChunkOutcome> {
    let (h, log_det, tape) = flow_forward(model, chunk)?;
    let row_logp = prior.log_density_rows(&h)?;
    let log_lik_sum: f64 =
        row_logp.iter().sum::<f64>() + chunk.rows() as f64 * log_det;
    if !log_lik_sum.is_finite() {
        return Err(Error::NumericOverflow(
            "non-finite log-likelihood".to_string(),
        ));
    }
    let grads = if want_grads {
        let scale = -1.0 / batch_rows as f64;
        let grad_h = prior.log_density_grad(&h)?.scale(scale);
        let grad_log_det = scale * chunk.rows() as f64;
        Some(flow_backward(model, &tape, &grad_h, grad_log_det)?)
    } else {
        None
    };
    Ok(ChunkOutcome { log_lik_sum, grads })
}

fn run_chunks(
    model: &FlowModel,
    prior: &Prior,
    batch: &Tensor,
    workers: usize,
    want_grads: bool,
) -> Result<Vec<ChunkOutcome>> {
    let n = batch.rows();
    if n == 0 {
        return Err(Error::dimension("empty batch"));
    }
    let bounds: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK_ROWS)
        .map(|s| (s, (s + CHUNK_ROWS).min(n)))
        .collect();
    let workers = workers.max(1).min(bounds.len());

    let annotate = |r: Result<ChunkOutcome>, lo: usize, hi: usize| {
        r.map_err(|e| match e {
            Error::NumericOverflow(msg) => {
                Error::NumericOverflow(format!("batch rows {lo}..{hi}: {msg}"))
            }
            other => other,
        })
    };

    if workers == 1 {
        let mut out = Vec::with_capacity(bounds.len());
        for &(lo, hi) in &bounds {
            let chunk = batch.slice_rows(lo..hi);
            out.push(annotate(
                process_chunk(model, prior, &chunk, n, want_grads),
                lo,
                hi,
            )?);
        }
        return Ok(out);
    }

    let slots: Mutex<Vec<Option<Result<ChunkOutcome>>>> =
        Mutex::new((0..bounds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= bounds.len() {
                    break;
                }
                let (lo, hi) = bounds[i];
                let chunk = batch.slice_rows(lo..hi);
                let res = annotate(process_chunk(model, prior, &chunk, n, want_grads), lo, hi);
                slots.lock().unwrap()[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("chunk result missing"))
        .collect()
}

/// Negative mean log-likelihood of the batch and exact gradients for every
/// model parameter (plus the per-example input gradients).
pub fn nice_loss_with_workers(
    model: &FlowModel,
    prior: &Prior,
    batch: &Tensor,
    workers: usize,
) -> Result<(f64, FlowGrads)> {
    let outcomes = run_chunks(model, prior, batch, workers, true)?;
    let mut total = FlowGrads::zeros_like(model, batch.rows());
    let mut log_lik = 0.0;
    let mut row = 0usize;
    for outcome in outcomes {
        log_lik += outcome.log_lik_sum;
        let grads = outcome.grads.expect("gradients requested");
        total.accumulate_params(&grads);
        for r in 0..grads.input.rows() {
            total
                .input
                .row_mut(row + r)
                .copy_from_slice(grads.input.row(r));
        }
        row += grads.input.rows();
    }
    let loss = -log_lik / batch.rows() as f64;
    Ok((loss, total))
}

/// Single-worker convenience wrapper.
pub fn nice_loss(model: &FlowModel, prior: &Prior, batch: &Tensor) -> Result<(f64, FlowGrads)> {
    nice_loss_with_workers(model, prior, batch, 1)
}

/// Mean model-space log-likelihood `(1/N) sum_b [log p_H(f(x_b)) + sum_i s_i]`
/// without gradients. Whitening corrections are the caller's concern.
pub fn mean_log_likelihood(
    model: &FlowModel,
    prior: &Prior,
    rows: &Tensor,
    workers: usize,
) -> Result<f64> {
    let outcomes = run_chunks(model, prior, rows, workers, false)?;
    let total: f64 = outcomes.iter().map(|o| o.log_lik_sum).sum();
    Ok(total / rows.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{identity_reference_model, make_reference_model};
    use crate::prior::{Prior, PriorKind};
    use crate::rng::seeded_rng;

    #[test]
    fn identity_flow_logistic_loss_at_origin() {
        let model = identity_reference_model(2).unwrap();
        let prior = Prior::new(PriorKind::Logistic, 2);
        // D = 1 per component: at x = 0 each component contributes 2 ln 2.
        let batch = Tensor::zeros(3, 2);
        let (loss, _) = nice_loss(&model, &prior, &batch).unwrap();
        assert!((loss - 4.0 * 2f64.ln()).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn identity_flow_gaussian_loss_at_origin() {
        let model = identity_reference_model(2).unwrap();
        let prior = Prior::new(PriorKind::Gaussian, 2);
        let batch = Tensor::zeros(1, 2);
        let (loss, _) = nice_loss(&model, &prior, &batch).unwrap();
        assert!((loss - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = seeded_rng(55);
        let mut model = make_reference_model(4, 2, 8, 13).unwrap();
        let prior = Prior::new(PriorKind::Logistic, 4);
        let batch = rng.normal_tensor(6, 4);

        let (_, grads) = nice_loss(&model, &prior, &batch).unwrap();
        // The loss is O(1..10), so central differences carry a roundoff floor
        // of about eps_machine * |loss| / step; the step and skip threshold
        // are sized so that floor stays below the 1e-5 relative tolerance.
        let eps = 1e-5;
        let grad_tensors: Vec<Tensor> = grads
            .param_tensors()
            .into_iter()
            .cloned()
            .collect();
        let n_params = grad_tensors.len();
        #[allow(clippy::needless_range_loop)]
        for p in 0..n_params {
            let len = grad_tensors[p].data().len();
            for idx in (0..len).step_by(7) {
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
                    "param {p} idx {idx}: {analytic} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn parallel_loss_is_bitwise_identical_to_serial() {
        let mut rng = seeded_rng(56);
        let model = make_reference_model(6, 2, 16, 3).unwrap();
        let prior = Prior::new(PriorKind::Logistic, 6);
        let batch = rng.normal_tensor(101, 6);
        let (l1, g1) = nice_loss_with_workers(&model, &prior, &batch, 1).unwrap();
        let (l4, g4) = nice_loss_with_workers(&model, &prior, &batch, 4).unwrap();
        assert_eq!(l1.to_bits(), l4.to_bits());
        for (a, b) in g1.param_tensors().iter().zip(g4.param_tensors()) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(g1.input.data(), g4.input.data());
    }

    #[test]
    fn mean_log_likelihood_matches_loss() {
        let mut rng = seeded_rng(57);
        let model = make_reference_model(3, 1, 8, 2).unwrap();
        let prior = Prior::new(PriorKind::Gaussian, 3);
        let batch = rng.normal_tensor(40, 3);
        let (loss, _) = nice_loss(&model, &prior, &batch).unwrap();
        let ll = mean_log_likelihood(&model, &prior, &batch, 1).unwrap();
        assert!((loss + ll).abs() < 1e-12);
    }
}
