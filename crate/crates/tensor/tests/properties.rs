//! Property tests for the library-wide numeric invariants.

use ddvqa_tensor::Tensor;
use proptest::prelude::*;

fn unit_interval_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_and_stay_positive(data in unit_interval_vec(12)) {
        let t = Tensor::from_vec(vec![3, 4], data).unwrap();
        let y = t.softmax_last();
        for row in y.data().chunks(4) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn gelu_grad_matches_finite_differences(data in unit_interval_vec(6)) {
        let x = Tensor::param(vec![6], data.clone()).unwrap();
        x.gelu().sum_all().backward().unwrap();
        let got = x.grad().unwrap();
        let h = 1e-5;
        for i in 0..6 {
            let mut up = data.clone();
            let mut dn = data.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = Tensor::from_vec(vec![6], up).unwrap().gelu().sum_all().item();
            let fd = Tensor::from_vec(vec![6], dn).unwrap().gelu().sum_all().item();
            let want = (fu - fd) / (2.0 * h);
            prop_assert!((got[i] - want).abs() / want.abs().max(1e-8) < 1e-4);
        }
    }

    #[test]
    fn matmul_grad_matches_finite_differences(
        a_data in unit_interval_vec(6),
        b_data in unit_interval_vec(6),
    ) {
        let a = Tensor::param(vec![2, 3], a_data.clone()).unwrap();
        let b = Tensor::param(vec![3, 2], b_data.clone()).unwrap();
        a.matmul(&b).unwrap().mean_all().backward().unwrap();
        let got = a.grad().unwrap();
        let h = 1e-5;
        for i in 0..6 {
            let mut up = a_data.clone();
            let mut dn = a_data.clone();
            up[i] += h;
            dn[i] -= h;
            let b_fixed = Tensor::from_vec(vec![3, 2], b_data.clone()).unwrap();
            let fu = Tensor::from_vec(vec![2, 3], up).unwrap()
                .matmul(&b_fixed).unwrap().mean_all().item();
            let fd = Tensor::from_vec(vec![2, 3], dn).unwrap()
                .matmul(&b_fixed).unwrap().mean_all().item();
            let want = (fu - fd) / (2.0 * h);
            prop_assert!((got[i] - want).abs() / want.abs().max(1e-8) < 1e-4);
        }
    }
}
