//! Shared test oracles, independent of the implementation paths they check.

use nalgebra::DMatrix;
use nice_core::{flow_forward, FlowModel, Tensor};

/// Central finite-difference Jacobian of the flow at `x` (one row).
pub fn finite_difference_jacobian(model: &FlowModel, x: &Tensor, eps: f64) -> DMatrix<f64> {
    let d = x.cols();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = x.clone();
        plus.set(0, j, x.get(0, j) + eps);
        let mut minus = x.clone();
        minus.set(0, j, x.get(0, j) - eps);
        let (hp, _, _) = flow_forward(model, &plus).unwrap();
        let (hm, _, _) = flow_forward(model, &minus).unwrap();
        for i in 0..d {
            jac[(i, j)] = (hp.get(0, i) - hm.get(0, i)) / (2.0 * eps);
        }
    }
    jac
}

/// log |det| via LU decomposition (nalgebra), the independent route against
/// the analytic `sum(s)` bookkeeping.
pub fn log_abs_det_lu(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().abs().ln()
}

