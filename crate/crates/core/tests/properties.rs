//! Property-based checks of the numeric kernels and the overlay encoding.

use ff_trainer::data::{overlay_label, zero_first_n};
use ff_trainer::math::{logistic, softmax_rows, Matrix};
use ff_trainer::metrics::roc_auc_binary;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |data| Matrix::from_vec(rows, cols, data).unwrap())
}

proptest! {
    #[test]
    fn matmul_is_associative(a in matrix(3, 4), b in matrix(4, 2), c in matrix(2, 5)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn logistic_is_symmetric_and_bounded(x in -50.0f64..50.0) {
        let p = logistic(x);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + logistic(-x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(m in matrix(4, 6), shift in -10.0f64..10.0) {
        let p = softmax_rows(&m);
        for i in 0..p.rows() {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|&v| v > 0.0));
        }
        let mut shifted = m.clone();
        for i in 0..shifted.rows() {
            for v in shifted.row_mut(i).iter_mut() {
                *v += shift;
            }
        }
        let q = softmax_rows(&shifted);
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn overlay_writes_exactly_one_hot_and_zeroing_clears_it(
        pixels in proptest::collection::vec(0.0f64..1.0, 32),
        label in 0usize..5,
    ) {
        let x = Matrix::from_vec(1, 32, pixels).unwrap();
        let n = 5;
        let with_label = overlay_label(&x, label, n).unwrap();
        let head = &with_label.row(0)[..n];
        prop_assert_eq!(head.iter().filter(|&&v| v == 1.0).count(), 1);
        prop_assert_eq!(head.iter().position(|&v| v == 1.0), Some(label));
        // Everything past the overlay region is untouched.
        prop_assert_eq!(&with_label.row(0)[n..], &x.row(0)[n..]);

        let neutral = zero_first_n(&with_label, n);
        prop_assert!(neutral.row(0)[..n].iter().all(|&v| v == 0.0));
        prop_assert_eq!(&neutral.row(0)[n..], &x.row(0)[n..]);
    }

    #[test]
    fn auc_is_bounded_and_invariant_under_monotone_rescale(
        scores in proptest::collection::vec(0.0f64..1.0, 4..40),
        seed_bits in any::<u64>(),
    ) {
        let mut truth: Vec<bool> = scores
            .iter()
            .enumerate()
            .map(|(i, _)| (seed_bits >> (i % 64)) & 1 == 1)
            .collect();
        truth[0] = true;
        truth[1] = false;
        let auc = roc_auc_binary(&scores, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let rescaled: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 2.0).collect();
        let auc2 = roc_auc_binary(&rescaled, &truth).unwrap();
        prop_assert!((auc - auc2).abs() < 1e-12);
    }
}
