use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::View;
use crate::numerics::{grad_check, Matrix, Tape};

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn normalize(x: &Matrix) -> Matrix {
    let norms = x.row_norms();
    Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) / norms[i])
}

fn random_unit(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    normalize(&Matrix::from_fn(rows, cols, |_, _| {
        rng.gen_range(-1.0..1.0)
    }))
}

fn assignment(view: View, ids: &[usize]) -> ViewAssignment {
    ViewAssignment {
        view,
        component_id: ids.to_vec(),
        nearest: vec![0; ids.len()],
    }
}

#[test]
fn icl_singleton_corpus_is_zero() {
    let z = m(&[&[0.6, 0.8], &[1.0, 0.0]]);
    assert_eq!(icl_loss_value(&z, &half_pairing(1), 0.5).unwrap(), 0.0);
}

#[test]
fn icl_two_pairs() {
    let z = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
    let e = 1f64.exp();
    let expected = -(e / (e + 2.0)).ln();
    let got = icl_loss_value(&z, &half_pairing(2), 1.0).unwrap();
    assert!((got - expected).abs() < 1e-14);
    assert!((got - 0.5514).abs() < 1e-4);
}

#[test]
fn icl_rejects_bad_arguments() {
    let z = Matrix::identity(4);
    assert!(icl_loss_value(&z, &half_pairing(2), 0.0).is_err());
    assert!(icl_loss_value(&z, &half_pairing(2), -1.0).is_err());
    assert!(icl_loss_value(&z, &[1, 0, 3, 3], 1.0).is_err());
    assert!(icl_loss_value(&z, &[1, 2, 3, 0], 1.0).is_err());
    assert!(icl_loss_value(&z, &half_pairing(1), 1.0).is_err());
}

#[test]
fn icl_rotation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random_unit(&mut rng, 6, 2);
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let rot = m(&[&[c, s], &[-s, c]]);
    let a = icl_loss_value(&z, &half_pairing(3), 0.5).unwrap();
    let b = icl_loss_value(&z.matmul(&rot).unwrap(), &half_pairing(3), 0.5).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn pseudo_labels_two_documents() {
    let a = build_pseudo_labels(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), View::Original).unwrap();
    assert_eq!(a.nearest, vec![1, 0]);
    assert_eq!(a.y_matrix().as_slice(), &[1.0; 4]);
}

#[test]
fn pseudo_labels_tie_breaks_low() {
    let a = build_pseudo_labels(
        &m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]),
        View::Augmented,
    )
    .unwrap();
    assert_eq!(a.nearest, vec![1, 0, 0]);
    assert_eq!(a.component_id, vec![0, 0, 0]);
}

#[test]
fn pseudo_labels_two_components() {
    let z = m(&[&[1.0, 0.1], &[0.0, 1.0], &[1.0, 0.0], &[0.1, 1.0]]);
    let a = build_pseudo_labels(&z, View::Original).unwrap();
    assert_eq!(a.nearest, vec![2, 3, 0, 1]);
    assert_eq!(a.component_id, vec![0, 1, 0, 1]);
    assert_eq!(a.num_components(), 2);
}

#[test]
fn pseudo_labels_need_two_documents() {
    assert!(build_pseudo_labels(&m(&[&[1.0]]), View::Original).is_err());
}

#[test]
fn pseudo_labels_split_views() {
    let z = m(&[
        &[1.0, 0.0],
        &[0.9, 0.1],
        &[0.0, 1.0],
        &[0.0, 1.0],
        &[1.0, 0.0],
        &[1.0, 0.0],
    ]);
    let labels = PseudoLabels::from_embeddings(&z).unwrap();
    assert_eq!(labels.n(), 3);
    assert_eq!(labels.org.view, View::Original);
    assert_eq!(labels.aug.nearest, vec![1, 2, 1]);
    assert!(PseudoLabels::from_embeddings(&Matrix::zeros(3, 2)).is_err());
}

#[test]
fn ccl_all_singletons_is_zero() {
    // N = 1 per view can only be expressed through a hand-built assignment
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 1, 2]),
        aug: assignment(View::Augmented, &[0, 1, 2]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u = random_unit(&mut rng, 6, 3);
    assert_eq!(
        ccl_loss_value(&u, &labels, 0.5, CclOptions::default()).unwrap(),
        0.0
    );
}

#[test]
fn ccl_perfect_clusters_is_zero() {
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 0]),
        aug: assignment(View::Augmented, &[0, 0]),
    };
    let u = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]]);
    assert_eq!(
        ccl_loss_value(&u, &labels, 1.0, CclOptions::default()).unwrap(),
        0.0
    );
}

#[test]
fn ccl_three_documents_by_hand() {
    // supervision {0,1} | {2} for both views
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 0, 1]),
        aug: assignment(View::Augmented, &[0, 0, 1]),
    };
    let org = [[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]];
    let aug = [[0.8, 0.6], [1.0, 0.0], [-0.6, 0.8]];
    let u = m(&[&org[0], &org[1], &org[2], &aug[0], &aug[1], &aug[2]]);
    let tau = 0.5;
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] * b[0] + a[1] * b[1]) / tau).exp();
    let term = |v: &[[f64; 2]; 3], i: usize, j: usize| {
        let den: f64 = (0..3).filter(|&k| k != i).map(|k| d(v[i], v[k])).sum();
        -(d(v[i], v[j]) / den).ln()
    };
    let expected =
        (term(&org, 0, 1) + term(&org, 1, 0) + term(&aug, 0, 1) + term(&aug, 1, 0)) / 3.0;
    let got = ccl_loss_value(&u, &labels, tau, CclOptions::default()).unwrap();
    assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
}

#[test]
fn ccl_uses_the_other_views_labels() {
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 1, 2]),
        aug: assignment(View::Augmented, &[0, 0, 1]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = random_unit(&mut rng, 6, 3);
    // only original anchors 0 and 1 have positives
    let dot = |i: usize, j: usize| {
        (u.row(i)
            .iter()
            .zip(u.row(j))
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / 0.7)
            .exp()
    };
    let anchor = |i: usize, j: usize| {
        let den: f64 = (0..3).filter(|&k| k != i).map(|k| dot(i, k)).sum();
        -(dot(i, j) / den).ln()
    };
    let expected = (anchor(0, 1) + anchor(1, 0)) / 3.0;
    let got = ccl_loss_value(&u, &labels, 0.7, CclOptions::default()).unwrap();
    assert!((got - expected).abs() < 1e-14);
}

#[test]
fn ccl_options() {
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 0, 0]),
        aug: assignment(View::Augmented, &[0, 0, 0]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_unit(&mut rng, 6, 4);
    let sum = ccl_loss_value(&u, &labels, 0.5, CclOptions::default()).unwrap();
    let mean = ccl_loss_value(
        &u,
        &labels,
        0.5,
        CclOptions {
            mean_positives: true,
            ..CclOptions::default()
        },
    )
    .unwrap();
    assert!((sum - 2.0 * mean).abs() < 1e-12);
    let wide = ccl_loss_value(
        &u,
        &labels,
        0.5,
        CclOptions {
            pool: CclPool::BothViews,
            ..CclOptions::default()
        },
    )
    .unwrap();
    // more rows in the denominator can only lower each log-probability
    assert!(wide > sum);
    assert!(ccl_loss_value(&u, &labels, 0.0, CclOptions::default()).is_err());
}

#[test]
fn tsv_dump() {
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 1]),
        aug: assignment(View::Augmented, &[0, 0]),
    };
    let mut buf = Vec::new();
    write_assignment_tsv(&mut buf, &labels, &[10, 11], &[12, 13]).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "doc_id\tview\tcomponent_id\n10\torg\t0\n11\torg\t1\n12\taug\t0\n13\taug\t0\n"
    );
    assert!(write_assignment_tsv(Vec::new(), &labels, &[1], &[2, 3]).is_err());
}

fn tape_grad_check(
    u: &Matrix,
    f: impl Fn(&mut Tape, crate::numerics::Var) -> crate::Result<crate::numerics::Var>,
) -> f64 {
    let report = grad_check(
        |p| {
            let mut tape = Tape::new();
            let x = tape.param(p[0].clone());
            let n = tape.row_l2_normalize(x);
            let l = f(&mut tape, n)?;
            tape.backward(l)?;
            Ok((tape.value(l).get(0, 0), vec![tape.grad(x).unwrap().clone()]))
        },
        std::slice::from_ref(u),
        1e-5,
        0,
    )
    .unwrap();
    report.max_relative_error
}

#[test]
fn icl_and_ccl_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = Matrix::from_fn(8, 3, |_, _| rng.gen_range(-1.0..1.0));
    assert!(tape_grad_check(&x, |t, z| icl_loss(t, z, &half_pairing(4), 0.5)) < 1e-6);
    let labels = PseudoLabels {
        org: assignment(View::Original, &[0, 0, 1, 1]),
        aug: assignment(View::Augmented, &[0, 1, 1, 0]),
    };
    for options in [
        CclOptions::default(),
        CclOptions {
            mean_positives: true,
            pool: CclPool::BothViews,
        },
    ] {
        assert!(tape_grad_check(&x, |t, u| ccl_loss(t, u, &labels, 0.3, options)) < 1e-6);
    }
}

fn embeddings(max_n: usize, dim: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-1.0f64..1.0, n * dim)
            .prop_map(move |v| Matrix::from_vec(n, dim, v).unwrap())
    })
}

proptest! {
    #[test]
    fn icl_nonnegative(z in embeddings(6, 3), tau in 0.1f64..2.0) {
        let rows = z.rows() / 2 * 2;
        let z = normalize(&z.gather_rows(&(0..rows).collect::<Vec<_>>()));
        prop_assert!(icl_loss_value(&z, &half_pairing(rows / 2), tau).unwrap() >= 0.0);
    }

    #[test]
    fn icl_monotone_in_positive_similarity(z in embeddings(4, 3), bump in 0.01f64..0.5, tau in 0.2f64..2.0) {
        prop_assume!(z.rows() == 4);
        let z = normalize(&z);
        let sim = z.matmul_nt(&z).unwrap();
        let eval = |s: &Matrix| {
            let mut tape = Tape::new();
            let v = tape.constant(s.clone());
            let l = icl_from_similarity(&mut tape, v, &half_pairing(2), tau).unwrap();
            tape.value(l).get(0, 0)
        };
        let mut raised = sim.clone();
        raised.set(0, 2, sim.get(0, 2) + bump);
        raised.set(2, 0, sim.get(2, 0) + bump);
        prop_assert!(eval(&raised) < eval(&sim));
        prop_assert!((eval(&sim) - icl_loss_value(&z, &half_pairing(2), tau).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn assignment_invariants(z in embeddings(12, 3)) {
        let a = build_pseudo_labels(&z, View::Original).unwrap();
        let y = a.y_matrix();
        let n = z.rows();
        for i in 0..n {
            prop_assert_eq!(y.get(i, i), 1.0);
            prop_assert_eq!(y.get(i, a.nearest[i]), 1.0);
            prop_assert!(a.nearest[i] != i);
            for j in 0..n {
                prop_assert_eq!(y.get(i, j), y.get(j, i));
            }
        }
        // ids are numbered by first appearance
        let mut seen = 0;
        for &c in &a.component_id {
            prop_assert!(c <= seen);
            if c == seen { seen += 1; }
        }
    }

    #[test]
    fn components_invariant_under_reordering(z in embeddings(10, 4), seed in any::<u64>()) {
        let n = z.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() { perm.swap(i, rng.gen_range(0..=i)); }
        let a = build_pseudo_labels(&z, View::Original).unwrap();
        let b = build_pseudo_labels(&z.gather_rows(&perm), View::Original).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.same(perm[i], perm[j]), b.same(i, j));
            }
        }
    }

    #[test]
    fn ccl_permutation_invariant(
        x in prop::collection::vec(-1.0f64..1.0, 30),
        org in prop::collection::vec(0usize..2, 5),
        aug in prop::collection::vec(0usize..2, 5),
        seed in any::<u64>(),
    ) {
        let u = normalize(&Matrix::from_vec(10, 3, x).unwrap());
        let mut perm: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..5).rev() { perm.swap(i, rng.gen_range(0..=i)); }
        let labels = PseudoLabels { org: assignment(View::Original, &org), aug: assignment(View::Augmented, &aug) };
        let permuted = PseudoLabels {
            org: assignment(View::Original, &perm.iter().map(|&p| org[p]).collect::<Vec<_>>()),
            aug: assignment(View::Augmented, &perm.iter().map(|&p| aug[p]).collect::<Vec<_>>()),
        };
        let rows: Vec<usize> = perm.iter().copied().chain(perm.iter().map(|p| p + 5)).collect();
        let a = ccl_loss_value(&u, &labels, 0.5, CclOptions::default()).unwrap();
        let b = ccl_loss_value(&u.gather_rows(&rows), &permuted, 0.5, CclOptions::default()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
