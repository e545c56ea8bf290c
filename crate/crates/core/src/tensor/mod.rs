//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! [`kernels`] holds the raw numeric routines; [`Graph`] is the tape that
//! records operations and plays them backwards for gradients. The same
//! kernels drive both the recorded forward pass and the incremental
//! decode path in the model layer, which keeps the two numerically
//! identical.

pub mod gradcheck;
mod graph;
pub mod kernels;

pub use graph::{Graph, TensorError, TensorId, LAYER_NORM_EPS};

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.input(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let b = g.input(vec![3.0, -1.0, 2.0, 5.0], &[2, 2]).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[3.0, -1.0, 2.0, 5.0]);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(vec![0.0; 6], &[2, 3]).unwrap();
        let b = g.input(vec![0.0; 8], &[4, 2]).unwrap();
        match g.matmul(a, b) {
            Err(TensorError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let mut g = Graph::new();
        let x = g.input(vec![5.0, 5.0, 5.0, 5.0], &[4]).unwrap();
        let s = g.softmax(x, 0).unwrap();
        for &v in g.value(s) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_any_axis() {
        let mut g = Graph::new();
        let x = g
            .input(vec![0.3, -1.2, 4.0, 0.0, 2.0, -0.5], &[2, 3])
            .unwrap();
        let s0 = g.softmax(x, 0).unwrap();
        let s1 = g.softmax(x, 1).unwrap();
        let v0 = g.value(s0);
        for c in 0..3 {
            assert!((v0[c] + v0[3 + c] - 1.0).abs() < 1e-12);
        }
        let v1 = g.value(s1);
        for r in 0..2 {
            let sum: f64 = v1[r * 3..(r + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_output_statistics() {
        // With unit gain / zero bias each lane is standardized up to the
        // eps term; use data with large variance so eps is negligible.
        let mut g = Graph::new();
        let data: Vec<f64> = (0..8).map(|i| (i as f64) * 37.0 - 100.0).collect();
        let x = g.input(data, &[2, 4]).unwrap();
        let gain = g.input(vec![1.0; 4], &[4]).unwrap();
        let bias = g.input(vec![0.0; 4], &[4]).unwrap();
        let y = g.layer_norm(x, gain, bias).unwrap();
        let v = g.value(y);
        for lane in v.chunks(4) {
            let mean: f64 = lane.iter().sum::<f64>() / 4.0;
            let var: f64 = lane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12, "lane mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "lane var {var}");
        }
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        // Single row, two classes: loss = ln(1 + exp(b - a)) for target 0.
        let (a, b) = (0.7, -0.4);
        let mut g = Graph::new();
        let x = g.input(vec![a, b], &[1, 2]).unwrap();
        let loss = g.cross_entropy(x, &[Some(0)], None).unwrap();
        let expected = crate::fmath::ln(1.0 + crate::fmath::exp(b - a));
        assert!((g.item(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_none_rows() {
        let mut g = Graph::new();
        let x = g
            .input(vec![0.7, -0.4, 100.0, -100.0], &[2, 2])
            .unwrap();
        let loss_masked = g.cross_entropy(x, &[Some(0), None], None).unwrap();
        let x1 = g.input(vec![0.7, -0.4], &[1, 2]).unwrap();
        let loss_single = g.cross_entropy(x1, &[Some(0)], None).unwrap();
        assert_eq!(g.item(loss_masked), g.item(loss_single));
    }

    #[test]
    fn cross_entropy_all_masked_is_error() {
        let mut g = Graph::new();
        let x = g.input(vec![0.0; 4], &[2, 2]).unwrap();
        assert_eq!(
            g.cross_entropy(x, &[None, None], None),
            Err(TensorError::NoValidTargets)
        );
    }

    #[test]
    fn broadcast_add_bias_over_rows() {
        let mut g = Graph::new();
        let x = g.input(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = g.input(vec![10.0, 20.0], &[2]).unwrap();
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y), &[11.0, 22.0, 13.0, 24.0]);
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        // Each bias element feeds both rows.
        assert_eq!(g.grad(b).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn slice_concat_round_trip() {
        let mut g = Graph::new();
        let x = g
            .input((0..12).map(|i| i as f64).collect(), &[3, 4])
            .unwrap();
        let top = g.slice_rows(x, 0, 1).unwrap();
        let rest = g.slice_rows(x, 1, 2).unwrap();
        let back = g.concat_rows(&[top, rest]).unwrap();
        assert_eq!(g.value(back), g.value(x));

        let left = g.slice_cols(x, 0, 3).unwrap();
        let right = g.slice_cols(x, 3, 1).unwrap();
        let back2 = g.concat_cols(&[left, right]).unwrap();
        assert_eq!(g.value(back2), g.value(x));
    }

    #[test]
    fn embedding_lookup_gathers_rows() {
        let mut g = Graph::new();
        let table = g
            .input(vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0], &[3, 2])
            .unwrap();
        let e = g.embedding_lookup(table, &[2, 0, 2]).unwrap();
        assert_eq!(g.value(e), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        let s = g.sum(e).unwrap();
        g.backward(s).unwrap();
        // Row 2 used twice, row 0 once, row 1 never.
        assert_eq!(g.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.input(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            g.backward(x),
            Err(TensorError::NotScalar { .. })
        ));
    }

    #[test]
    fn reused_node_accumulates_gradient() {
        // y = x*x summed; dy/dx = 2x.
        let mut g = Graph::new();
        let x = g.input(vec![3.0, -2.0], &[2]).unwrap();
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0, -4.0]);
    }

    #[test]
    fn borrowed_input_receives_gradient() {
        let params = [2.0, 5.0];
        let mut g = Graph::new();
        let p = g.input_ref(&params, &[2]).unwrap();
        let y = g.mul(p, p).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[4.0, 10.0]);
    }
}
