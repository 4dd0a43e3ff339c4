use proptest::prelude::*;
use sfr_core::numeric::{
    infonce_loss, nll_loss, spmm, AdamConfig, AdamState, CsrMatrix, DenseMatrix,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn log_softmax(z: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        let r = z.row(i);
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        z.get(i, j) - m - r.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    })
}

/// InfoNCE written directly from its definition.
fn infonce_oracle(z: &DenseMatrix<f64>, za: &DenseMatrix<f64>, mask: &[bool], tau: f64) -> f64 {
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let rows: Vec<usize> = (0..z.rows()).filter(|&i| mask[i]).collect();
    let cos = |i: usize, j: usize| {
        let d: f64 = z.row(i).iter().zip(za.row(j)).map(|(a, b)| a * b).sum();
        d / (norm(z.row(i)) * norm(za.row(j)))
    };
    rows.iter()
        .map(|&i| {
            let denom: f64 = rows.iter().map(|&j| (cos(i, j) / tau).exp()).sum();
            -(cos(i, i) / tau).exp().ln() + denom.ln()
        })
        .sum::<f64>()
        / rows.len() as f64
}

fn shapes() -> impl Strategy<Value = (usize, usize)> {
    (2usize..10, 2usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn nll_is_nonnegative_and_matches_definition(
        (z, labels, mask) in shapes().prop_flat_map(|(n, c)| (
            matrix(n, c),
            prop::collection::vec(0..c, n),
            prop::collection::vec(any::<bool>(), n),
        ))
    ) {
        prop_assume!(mask.iter().any(|&m| m));
        let lp = log_softmax(&z);
        let (loss, _) = nll_loss(&lp, &labels, &mask).unwrap();
        prop_assert!(loss >= 0.0);
        let rows: Vec<usize> = (0..z.rows()).filter(|&i| mask[i]).collect();
        let expect = -rows.iter().map(|&i| lp.get(i, labels[i])).sum::<f64>() / rows.len() as f64;
        prop_assert!((loss - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn infonce_matches_definition_and_is_nonnegative(
        (z, za, mask, tau) in (2usize..9, 2usize..6).prop_flat_map(|(n, d)| (
            matrix(n, d),
            matrix(n, d),
            prop::collection::vec(any::<bool>(), n),
            0.2f64..3.0,
        ))
    ) {
        prop_assume!(mask.iter().any(|&m| m));
        let out = infonce_loss(&z, &za, &mask, tau).unwrap();
        prop_assert!(out.loss >= -1e-12);
        let expect = infonce_oracle(&z, &za, &mask, tau);
        prop_assert!((out.loss - expect).abs() <= 1e-10 * expect.abs().max(1.0), "{} vs {expect}", out.loss);
    }

    #[test]
    fn infonce_is_invariant_to_row_scaling(
        (z, za, scales) in (2usize..8, 2usize..5).prop_flat_map(|(n, d)| (
            matrix(n, d),
            matrix(n, d),
            prop::collection::vec(0.1f64..10.0, n),
        ))
    ) {
        let mask = vec![true; z.rows()];
        let scaled = DenseMatrix::from_fn(z.rows(), z.cols(), |i, j| z.get(i, j) * scales[i]);
        let a = infonce_loss(&z, &za, &mask, 1.0).unwrap();
        let b = infonce_loss(&scaled, &za, &mask, 1.0).unwrap();
        prop_assume!((0..z.rows()).all(|i| z.row(i).iter().any(|x| x.abs() > 1e-3)));
        prop_assert!((a.loss - b.loss).abs() <= 1e-10 * a.loss.abs().max(1.0));
        // The gradient of a scale-invariant function is orthogonal to each row.
        for i in 0..z.rows() {
            let dot: f64 = z.row(i).iter().zip(a.grad_z.row(i)).map(|(x, g)| x * g).sum();
            prop_assert!(dot.abs() <= 1e-10);
        }
    }

    #[test]
    fn spmm_matches_dense_product(
        (a, h) in (1usize..12, 1usize..12, 1usize..5).prop_flat_map(|(n, m, k)| (
            prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => -2.0f64..2.0], n * m)
                .prop_map(move |v| DenseMatrix::from_vec(n, m, v).unwrap()),
            matrix(m, k),
        ))
    ) {
        let sparse = CsrMatrix::from_dense(&a);
        let got = spmm(&sparse, &h).unwrap();
        let expect = a.matmul(&h).unwrap();
        for (x, y) in got.data().iter().zip(expect.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}

#[test]
fn adam_with_constant_gradient_moves_lr_per_step() {
    let cfg = AdamConfig::new(0.01, 0.0);
    let g = [0.5f64, -2.0, 1e-3];
    let mut p = [1.0f64, 1.0, 1.0];
    let mut st = AdamState::new(&[3]);
    for _ in 0..25 {
        st.update(&cfg, &mut [&mut p[..]], &[&g[..]]);
    }
    for (pi, gi) in p.iter().zip(g) {
        let expect = 1.0 - 25.0 * 0.01 * gi / (gi.abs() + 1e-8);
        assert!((pi - expect).abs() < 1e-9, "{pi} vs {expect}");
    }
    assert_eq!(st.step_count(), 25);
}

#[test]
fn adam_folds_weight_decay_into_the_gradient() {
    let cfg = AdamConfig::new(0.01, 5e-4);
    let mut p = [2.0f64, -4.0];
    let g = [0.0f64, 1.0];
    AdamState::new(&[2]).update(&cfg, &mut [&mut p[..]], &[&g[..]]);
    for (k, p0) in [2.0f64, -4.0].into_iter().enumerate() {
        let gp = g[k] + 5e-4 * p0;
        let expect = p0 - 0.01 * gp / (gp.abs() + 1e-8);
        assert!((p[k] - expect).abs() < 1e-12);
    }
}
