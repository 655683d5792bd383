mod common;

use common::*;
use lelp_kd::lelp::{predict_class, subsplit, SubclassProjector};
use lelp_kd::linalg::{orthonormalize_columns, random_orthogonal, Matrix};
use lelp_kd::nn::softmax_tempered;
use proptest::prelude::*;

#[test]
fn jacobi_oracle_reproduces_determinant_and_trace() {
    let mut r = rng(7);
    for n in 1..=6 {
        let b = random_matrix(&mut r, n, n, 1.0);
        let a = b.matmul_tn(&b).unwrap();
        let (vals, vecs) = jacobi_oracle(&a);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let det = cofactor_det(&rows);
        let prod: f64 = vals.iter().product();
        assert!(
            (det - prod).abs() <= 1e-9 * det.abs().max(1.0),
            "n={n}: {det} vs {prod}"
        );
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        assert!((trace - vals.iter().sum::<f64>()).abs() < 1e-10);
        for (v, &lam) in vecs.iter().zip(&vals) {
            let av: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum()).collect();
            for i in 0..n {
                assert!((av[i] - lam * v[i]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn cofactor_det_of_known_matrices() {
    assert_eq!(cofactor_det(&[vec![2.0, 0.0], vec![0.0, 3.0]]), 6.0);
    assert_eq!(cofactor_det(&[vec![1.0, 2.0], vec![3.0, 4.0]]), -2.0);
    let perm = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
    assert_eq!(cofactor_det(&perm), 1.0);
}

#[test]
fn subsplit_marginals_small() {
    check_subsplit_marginals(200, 11).unwrap();
}

#[test]
fn pca_matches_jacobi() {
    check_pca_vs_jacobi(20, 12).unwrap();
}

#[test]
fn orthonormalization_spans_input() {
    check_orthonormalize_spans(50, 13).unwrap();
}

#[test]
fn losses_match_scalar_loops() {
    check_losses_vs_scalar(50, 14).unwrap();
}

#[test]
fn gradients_match_finite_differences() {
    check_gradients(5).unwrap();
}

#[test]
fn random_orthogonal_matches_oracle_orthonormality() {
    for s in 1..=8 {
        let q = random_orthogonal(s, s as u64);
        let rows: Vec<Vec<f64>> = q.row_iter().map(<[f64]>::to_vec).collect();
        let det = cofactor_det(&rows);
        assert!((det.abs() - 1.0).abs() < 1e-10, "s={s}: det {det}");
        let g = q.matmul_nt(&q).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(s)) < 1e-10);
    }
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tempered_softmax_rows_are_distributions(z in matrix_strategy(3, 5), t in 0.05f64..20.0) {
        let p = softmax_tempered(&z, t).unwrap();
        for i in 0..3 {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let oracle = softmax_oracle(z.row(i), t);
            for (a, b) in row.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subsplit_factorizes_over_classes(
        h in prop::collection::vec(-3.0f64..3.0, 4),
        w in matrix_strategy(4, 3),
        dirs in prop::collection::vec(matrix_strategy(2, 4), 3),
        means in matrix_strategy(3, 4),
        tau in 0.1f64..8.0,
        beta in 0.1f64..8.0,
    ) {
        let proj = SubclassProjector { means, directions: dirs, subclasses: 2, beta, seed: 0, nullspace: false };
        let b = [0.3, -0.2, 0.1];
        let p = subsplit(&h, &proj, &w, &b, tau).unwrap();
        let logits: Vec<f64> = (0..3).map(|c| (0..4).map(|k| w[(k, c)] * h[k]).sum::<f64>() + b[c]).collect();
        let pc = softmax_oracle(&logits, tau);
        for c in 0..3 {
            prop_assert!((p[2 * c] + p[2 * c + 1] - pc[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_class_is_argmax_of_summed_mass(z in prop::collection::vec(-6.0f64..6.0, 12), s in prop::sample::select(vec![1usize, 2, 3, 4, 6])) {
        let p = softmax_oracle(&z, 1.0);
        let mass: Vec<f64> = p.chunks(s).map(|g| g.iter().sum()).collect();
        let best = mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let got = predict_class(&z, s);
        prop_assert!(mass[got] >= best - 1e-12);
    }

    #[test]
    fn orthonormalized_columns_are_orthonormal(w in matrix_strategy(6, 3)) {
        let q = orthonormalize_columns(&w);
        let g = q.matmul_tn(&q).unwrap();
        prop_assert!(g.max_abs_diff(&Matrix::identity(q.cols())) < 1e-10);
        let basis = basis_oracle(&(0..3).map(|c| w.column(c)).collect::<Vec<_>>());
        prop_assert_eq!(basis.len(), q.cols());
    }
}
