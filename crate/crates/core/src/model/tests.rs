use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{
    cosine_adjacency, GraphKind, InfoGraph, InfoGraphs, ProjectionMatrix, Projections,
};
use crate::numerics::{CsrMatrix, Matrix, SparseOperand, Tape};

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn run_gcn(adj: CsrMatrix, x: Matrix, w0: Matrix, w1: Matrix) -> Matrix {
    let g = InfoGraph::new(GraphKind::Word, x, adj).unwrap();
    let mut tape = Tape::new();
    let a = SparseOperand::new(g.norm_adjacency.clone());
    let x = tape.constant(g.features.clone());
    let w0 = tape.param(w0);
    let w1 = tape.param(w1);
    let h = gcn_forward(&mut tape, &a, x, w0, w1, FinalActivation::Linear).unwrap();
    tape.value(h).clone()
}

#[test]
fn gcn_single_node() {
    let one = || m(&[&[1.0]]);
    assert_eq!(
        run_gcn(CsrMatrix::zeros(1, 1), m(&[&[2.0]]), one(), one()).as_slice(),
        &[2.0]
    );
    assert_eq!(
        run_gcn(CsrMatrix::zeros(1, 1), m(&[&[-1.0]]), one(), one()).as_slice(),
        &[0.0]
    );
}

#[test]
fn gcn_two_node_path() {
    // Â = [[.5,.5],[.5,.5]]
    // XW0 = [[1,-1],[2,-6]] -> Â· = [[1.5,-3.5]]x2 -> ReLU [[1.5,0]]x2
    // ·W1 = [[3,1.5]]x2 -> Â· = [[3,1.5]]x2
    let adj = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let h = run_gcn(
        adj,
        m(&[&[1.0, 0.0], &[0.0, 2.0]]),
        m(&[&[1.0, -1.0], &[1.0, -3.0]]),
        m(&[&[2.0, 1.0], &[0.0, 1.0]]),
    );
    assert_eq!(h.as_slice(), &[3.0, 1.5, 3.0, 1.5]);
}

#[test]
fn gcn_shape_mismatch_is_an_error() {
    let g = InfoGraph::new(GraphKind::Word, Matrix::zeros(2, 3), CsrMatrix::zeros(2, 2)).unwrap();
    let mut tape = Tape::new();
    let a = SparseOperand::new(g.norm_adjacency.clone());
    let x = tape.constant(g.features.clone());
    let w0 = tape.param(Matrix::zeros(2, 4));
    let w1 = tape.param(Matrix::zeros(4, 4));
    assert!(gcn_forward(&mut tape, &a, x, w0, w1, FinalActivation::Linear).is_err());
}

#[test]
fn final_relu_knob() {
    let g = InfoGraph::new(GraphKind::Word, m(&[&[1.0]]), CsrMatrix::zeros(1, 1)).unwrap();
    let a = SparseOperand::new(g.norm_adjacency.clone());
    let mut tape = Tape::new();
    let x = tape.constant(g.features.clone());
    let w0 = tape.param(m(&[&[1.0]]));
    let w1 = tape.param(m(&[&[-1.0]]));
    let lin = gcn_forward(&mut tape, &a, x, w0, w1, FinalActivation::Linear).unwrap();
    let relu = gcn_forward(&mut tape, &a, x, w0, w1, FinalActivation::Relu).unwrap();
    assert_eq!(tape.value(lin).as_slice(), &[-1.0]);
    assert_eq!(tape.value(relu).as_slice(), &[0.0]);
}

fn aggregate(p: CsrMatrix, h: Matrix) -> Matrix {
    let mut tape = Tape::new();
    let h = tape.constant(h);
    let z = aggregate_texts(&mut tape, &SparseOperand::new(p), h).unwrap();
    tape.value(z).clone()
}

#[test]
fn aggregate_examples() {
    let h = m(&[&[0.0, 3.0], &[4.0, 0.0]]);
    let one_hot = CsrMatrix::from_triplets(1, 2, vec![(0, 1, 1.0)]).unwrap();
    assert_eq!(aggregate(one_hot, h.clone()).as_slice(), &[1.0, 0.0]);

    let mixed = CsrMatrix::from_triplets(1, 2, vec![(0, 0, 3.0), (0, 1, 4.0)]).unwrap();
    let z = aggregate(mixed, Matrix::identity(2));
    assert!((z.get(0, 0) - 0.6).abs() < 1e-15 && (z.get(0, 1) - 0.8).abs() < 1e-15);

    let empty = CsrMatrix::zeros(2, 2);
    assert_eq!(aggregate(empty, h).as_slice(), &[0.0; 4]);
}

#[test]
fn aggregate_shape_check() {
    let mut tape = Tape::new();
    let h = tape.constant(Matrix::zeros(3, 2));
    assert!(aggregate_texts(&mut tape, &SparseOperand::new(CsrMatrix::zeros(1, 2)), h).is_err());
}

/// A small random three-source setup with `rows` documents.
fn fixture(rows: usize, seed: u64) -> (InfoGraphs, Projections) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = |kind, n: usize, f: usize| {
        let x = Matrix::from_fn(n, f, |_, _| rng.gen_range(-1.0..1.0));
        InfoGraph::new(kind, x.clone(), cosine_adjacency(&x)).unwrap()
    };
    let graphs = InfoGraphs {
        word: graph(GraphKind::Word, 6, 4),
        pos: graph(GraphKind::Pos, 3, 3),
        entity: graph(GraphKind::Entity, 4, 2),
    };
    let mut proj = |kind, cols: usize| {
        let mut t = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if rng.gen_bool(0.5) {
                    t.push((i, j, rng.gen_range(0.1..2.0)));
                }
            }
        }
        ProjectionMatrix {
            kind,
            values: CsrMatrix::from_triplets(rows, cols, t).unwrap(),
        }
    };
    let projections = Projections {
        word: proj(GraphKind::Word, 6),
        pos: proj(GraphKind::Pos, 3),
        entity: proj(GraphKind::Entity, 4),
    };
    (graphs, projections)
}

fn outputs(
    graphs: &InfoGraphs,
    projections: &Projections,
    config: &ModelConfig,
    seed: u64,
) -> ForwardOutputs {
    let params = ModelParams::init(config, graphs, 3, seed).unwrap();
    let inputs = EncoderInputs::new(graphs, projections, &params.sources()).unwrap();
    ForwardOutputs::compute(&inputs, &params, config).unwrap()
}

#[test]
fn concatenation_order_and_widths() {
    let (g, p) = fixture(5, 1);
    let config = ModelConfig {
        hidden: 4,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&config, &g, 3, 0).unwrap();
    assert_eq!(
        params.sources(),
        vec![GraphKind::Word, GraphKind::Entity, GraphKind::Pos]
    );
    assert_eq!(params.d_z(), 12);
    assert_eq!(params.phi_weight.cols(), 6);
    assert_eq!(params.psi_weight.shape(), (6, 3));

    let out = outputs(&g, &p, &config, 0);
    assert_eq!(out.z.shape(), (5, 12));
    assert_eq!(out.u.shape(), (5, 6));
    for i in 0..5 {
        let blocks: Vec<f64> = (0..3)
            .map(|b| {
                out.z.row(i)[b * 4..(b + 1) * 4]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .collect();
        let nonzero = blocks.iter().filter(|&&s| s > 0.0).count() as f64;
        let norm2: f64 = blocks.iter().sum();
        assert!(
            (norm2 - nonzero).abs() < 1e-12,
            "row {i}: {norm2} vs {nonzero} unit blocks"
        );
    }

    let no_entity = ModelConfig {
        hidden: 4,
        use_entity: false,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&no_entity, &g, 3, 0).unwrap();
    assert_eq!(params.sources(), vec![GraphKind::Word, GraphKind::Pos]);
    assert_eq!(params.d_z(), 8);
    assert_eq!(outputs(&g, &p, &no_entity, 0).z_tilde.cols(), 8);
}

#[test]
fn three_orthogonal_unit_blocks() {
    let unit_graph =
        |kind, f: usize| InfoGraph::new(kind, Matrix::identity(f), CsrMatrix::zeros(f, f)).unwrap();
    let graphs = InfoGraphs {
        word: unit_graph(GraphKind::Word, 1),
        pos: unit_graph(GraphKind::Pos, 1),
        entity: unit_graph(GraphKind::Entity, 1),
    };
    let ones = |kind| ProjectionMatrix {
        kind,
        values: CsrMatrix::from_triplets(1, 1, vec![(0, 0, 2.0)]).unwrap(),
    };
    let projections = Projections {
        word: ones(GraphKind::Word),
        pos: ones(GraphKind::Pos),
        entity: ones(GraphKind::Entity),
    };
    let config = ModelConfig {
        hidden: 1,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&config, &graphs, 2, 0).unwrap();
    for e in &mut params.encoders {
        e.w0 = Matrix::scalar(1.0);
        e.w1 = Matrix::scalar(1.0);
    }
    let inputs = EncoderInputs::new(&graphs, &projections, &params.sources()).unwrap();
    let out = ForwardOutputs::compute(&inputs, &params, &config).unwrap();
    assert_eq!(out.z.as_slice(), &[1.0, 1.0, 1.0]);
    assert!((out.z.row_norms()[0] - 3f64.sqrt()).abs() < 1e-15);
    assert!((out.z_tilde.row_norms()[0] - 1.0).abs() < 1e-15);
}

#[test]
fn identical_texts_share_embeddings() {
    let (g, mut p) = fixture(4, 2);
    for proj in [&mut p.word, &mut p.pos, &mut p.entity] {
        let d = proj.values.to_dense();
        let copy = Matrix::from_fn(4, d.cols(), |i, j| d.get(if i == 3 { 0 } else { i }, j));
        proj.values = CsrMatrix::from_dense(&copy);
    }
    let out = outputs(&g, &p, &ModelConfig::default(), 3);
    assert_eq!(out.z_tilde.row(0), out.z_tilde.row(3));
    assert_eq!(out.q.row(0), out.q.row(3));
}

#[test]
fn forward_postconditions() {
    for seed in 0..5 {
        let (g, p) = fixture(7, seed);
        let config = ModelConfig {
            hidden: 5,
            ..ModelConfig::default()
        };
        let out = outputs(&g, &p, &config, seed);
        for (name, mat) in [("z_tilde", &out.z_tilde), ("u_tilde", &out.u_tilde)] {
            for (i, n) in mat.row_norms().into_iter().enumerate() {
                assert!(
                    n == 0.0 || (n - 1.0).abs() < 1e-6,
                    "{name} row {i} norm {n}"
                );
            }
        }
        for i in 0..out.q.rows() {
            let s: f64 = out.q.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(out.q.row(i).iter().all(|&v| v >= 0.0));
        }
        assert!(out.u.as_slice().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn permuting_documents_permutes_outputs() {
    let (g, p) = fixture(6, 9);
    let perm = [4usize, 0, 5, 2, 1, 3];
    let permute = |pm: &ProjectionMatrix| {
        let d = pm.values.to_dense();
        ProjectionMatrix {
            kind: pm.kind,
            values: CsrMatrix::from_dense(&d.gather_rows(&perm)),
        }
    };
    let q = Projections {
        word: permute(&p.word),
        pos: permute(&p.pos),
        entity: permute(&p.entity),
    };
    let config = ModelConfig {
        hidden: 3,
        ..ModelConfig::default()
    };
    let a = outputs(&g, &p, &config, 4);
    let b = outputs(&g, &q, &config, 4);
    for (x, y) in [
        (&a.z, &b.z),
        (&a.z_tilde, &b.z_tilde),
        (&a.u, &b.u),
        (&a.u_tilde, &b.u_tilde),
        (&a.q, &b.q),
    ] {
        let expected = x.gather_rows(&perm);
        for (u, v) in expected.as_slice().iter().zip(y.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn projection_head_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(m(&[&[0.6, 0.8, 0.0, 0.0], &[0.0, 0.0, -1.0, 0.0]]));
    let w0 = tape.param(Matrix::zeros(4, 2));
    let b0 = tape.param(Matrix::zeros(1, 2));
    let (u, ut) = project_ccl(&mut tape, z, w0, b0).unwrap();
    assert_eq!(tape.value(u).as_slice(), &[0.0; 4]);
    assert_eq!(tape.value(ut).as_slice(), &[0.0; 4]);

    // top half of the identity: U = ReLU(Z̃[:, :2] + b)
    let w = tape.param(Matrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 }));
    let b = tape.param(m(&[&[0.1, -0.5]]));
    let (u, ut) = project_ccl(&mut tape, z, w, b).unwrap();
    let u = tape.value(u);
    assert!((u.get(0, 0) - 0.7).abs() < 1e-15 && (u.get(0, 1) - 0.3).abs() < 1e-15);
    assert_eq!(u.row(1), &[0.1, 0.0]);
    let ut = tape.value(ut);
    let n = (0.49f64 + 0.09).sqrt();
    assert!((ut.get(0, 0) - 0.7 / n).abs() < 1e-15);
    assert_eq!(ut.row(1), &[1.0, 0.0]);
}

#[test]
fn classify_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(m(&[&[1.0, -2.0]]));
    let zero_w = tape.param(Matrix::zeros(2, 5));
    let zero_b = tape.param(Matrix::zeros(1, 5));
    let (_, q) = classify(&mut tape, x, zero_w, zero_b).unwrap();
    assert!(tape
        .value(q)
        .as_slice()
        .iter()
        .all(|&v| (v - 0.2).abs() < 1e-15));

    // logits ReLU([2, -3]) = [2, 0]
    let w = tape.param(m(&[&[2.0, 1.0], &[0.0, 2.0]]));
    let b = tape.param(Matrix::zeros(1, 2));
    let (logits, q) = classify(&mut tape, x, w, b).unwrap();
    assert_eq!(tape.value(logits).as_slice(), &[2.0, 0.0]);
    let q = tape.value(q);
    assert!((q.get(0, 0) - 0.8808).abs() < 1e-4 && (q.get(0, 1) - 0.1192).abs() < 1e-4);
    let e2 = 2f64.exp();
    assert!((q.get(0, 0) - e2 / (e2 + 1.0)).abs() < 1e-15);
}

#[test]
fn ohsumed_shaped_head_width() {
    let (g, p) = fixture(3, 5);
    let config = ModelConfig {
        hidden: 2,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&config, &g, 23, 0).unwrap();
    let inputs = EncoderInputs::new(&g, &p, &params.sources()).unwrap();
    let out = ForwardOutputs::compute(&inputs, &params, &config).unwrap();
    assert_eq!(out.q.cols(), 23);
}

#[test]
fn predict_ties_go_low() {
    let q = m(&[&[0.25, 0.5, 0.25], &[0.4, 0.2, 0.4], &[0.1, 0.1, 0.8]]);
    assert_eq!(predict(&q), vec![1, 0, 2]);
}

#[test]
fn normalized_rows_are_scale_free() {
    let mut tape = Tape::new();
    let a = tape.constant(m(&[&[1.0, 2.0, -2.0]]));
    let b = tape.constant(m(&[&[3.5, 7.0, -7.0]]));
    let (na, nb) = (tape.row_l2_normalize(a), tape.row_l2_normalize(b));
    for (x, y) in tape
        .value(na)
        .as_slice()
        .iter()
        .zip(tape.value(nb).as_slice())
    {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn parallel_layout_reads_z_tilde() {
    let (g, p) = fixture(4, 6);
    let config = ModelConfig {
        hidden: 4,
        layout: TaskLayout::Parallel,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&config, &g, 3, 1).unwrap();
    assert_eq!(params.psi_weight.rows(), params.d_z());
    let inputs = EncoderInputs::new(&g, &p, &params.sources()).unwrap();
    let mut tape = Tape::new();
    let vars = forward(&mut tape, &inputs, &params, &config).unwrap();
    let z = tape.value(vars.z_tilde).clone();
    let mut direct = Tape::new();
    let x = direct.constant(z);
    let w = direct.param(params.psi_weight.clone());
    let b = direct.param(params.psi_bias.clone());
    let (_, q) = classify(&mut direct, x, w, b).unwrap();
    assert_eq!(direct.value(q), tape.value(vars.q));
}

#[test]
fn named_tensors_round_trip() {
    let (g, _) = fixture(2, 0);
    let params = ModelParams::init(&ModelConfig::default(), &g, 4, 11).unwrap();
    let named = params
        .named()
        .into_iter()
        .map(|(n, m)| (n, m.clone()))
        .collect();
    assert_eq!(ModelParams::from_named(named).unwrap(), params);
    let mut other = params.clone();
    other.set_tensors(&params.tensors()).unwrap();
    assert_eq!(other, params);
    assert!(other.set_tensors(&params.tensors()[1..]).is_err());
}
