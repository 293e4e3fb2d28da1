//! Structural verification of the flow against finite-difference Jacobians.

mod common;

use common::{finite_difference_jacobian, log_abs_det_lu};
use nice_core::{
    coupling_forward, flow_forward, flow_inverse, make_reference_model, seeded_rng, Tensor,
};
use proptest::prelude::*;

#[test]
fn analytic_log_det_matches_lu_of_fd_jacobian() {
    for (dim, seed) in [(2usize, 11u64), (4, 12), (6, 13), (8, 14)] {
        let model = make_reference_model(dim, 2, 12, seed).unwrap();
        let mut rng = seeded_rng(seed ^ 0xfeed);
        for _ in 0..3 {
            let x = rng.normal_tensor(1, dim);
            let (_, analytic, _) = flow_forward(&model, &x).unwrap();
            let jac = finite_difference_jacobian(&model, &x, 1e-5);
            let numeric = log_abs_det_lu(&jac);
            let denom = analytic.abs().max(1e-3);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "dim {dim}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn log_det_is_independent_of_the_input_point() {
    let dim = 6;
    let model = make_reference_model(dim, 1, 10, 3).unwrap();
    let mut rng = seeded_rng(77);
    let (_, ld_a, _) = flow_forward(&model, &rng.normal_tensor(1, dim)).unwrap();
    let (_, ld_b, _) = flow_forward(&model, &rng.normal_tensor(1, dim).scale(4.0)).unwrap();
    assert_eq!(ld_a, ld_b);
    // And both match the Jacobian determinant at a third point.
    let x = rng.normal_tensor(1, dim);
    let numeric = log_abs_det_lu(&finite_difference_jacobian(&model, &x, 1e-5));
    assert!((ld_a - numeric).abs() < 1e-4, "{ld_a} vs {numeric}");
}

#[test]
fn coupling_jacobian_is_triangular_with_unit_diagonal() {
    let dim = 8;
    let model = make_reference_model(dim, 2, 12, 5).unwrap();
    let layer = &model.couplings[0];
    let mut rng = seeded_rng(6);
    let x = rng.normal_tensor(1, dim);

    // FD Jacobian of the single layer.
    let eps = 1e-5;
    let mut jac = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut plus = x.clone();
        plus.set(0, j, x.get(0, j) + eps);
        let mut minus = x.clone();
        minus.set(0, j, x.get(0, j) - eps);
        let (yp, _) = coupling_forward(layer, &plus).unwrap();
        let (ym, _) = coupling_forward(layer, &minus).unwrap();
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = (yp.get(0, i) - ym.get(0, i)) / (2.0 * eps);
        }
    }

    // Permute so the unchanged block comes first: the result must be lower
    // triangular with ones on the diagonal.
    let order: Vec<usize> = layer
        .partition
        .unchanged
        .iter()
        .chain(&layer.partition.transformed)
        .cloned()
        .collect();
    for (pi, &i) in order.iter().enumerate() {
        for (pj, &j) in order.iter().enumerate() {
            let v = jac[i][j];
            if pi == pj {
                assert!((v - 1.0).abs() < 1e-8, "diagonal ({pi},{pj}) = {v}");
            } else if pj > pi {
                assert!(v.abs() < 1e-8, "upper entry ({pi},{pj}) = {v}");
            }
        }
    }
}

#[test]
fn first_two_layers_modify_disjoint_blocks_and_three_give_full_dependence() {
    let dim = 6;
    let model = make_reference_model(dim, 2, 16, 21).unwrap();
    let a: std::collections::BTreeSet<_> =
        model.couplings[0].partition.transformed.iter().collect();
    let b: std::collections::BTreeSet<_> =
        model.couplings[1].partition.transformed.iter().collect();
    assert!(a.is_disjoint(&b));

    // Truncated stack of the first three couplings (identity scaling).
    let three = nice_core::FlowModel::new(
        model.couplings[..3].to_vec(),
        nice_core::ScalingLayer::zeros(dim),
    )
    .unwrap();
    let mut rng = seeded_rng(31);
    let x = rng.normal_tensor(1, dim);
    let jac = finite_difference_jacobian(&three, &x, 1e-5);
    for i in 0..dim {
        for j in 0..dim {
            assert!(
                jac[(i, j)].abs() > 1e-12,
                "output {i} does not depend on input {j}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_within_1e9_for_bounded_inputs(
        seed in 0u64..1000,
        dim in 2usize..10,
        scale in 0.1f64..10.0,
    ) {
        let model = make_reference_model(dim, 1, 12, seed).unwrap();
        let mut rng = seeded_rng(seed.wrapping_add(999));
        let x = Tensor::from_fn(4, dim, |_, _| (rng.uniform() * 2.0 - 1.0) * scale);
        let (h, _, _) = flow_forward(&model, &x).unwrap();
        let back = flow_inverse(&model, &h).unwrap();
        prop_assert!(back.max_abs_diff(&x) < 1e-9);
    }
}
