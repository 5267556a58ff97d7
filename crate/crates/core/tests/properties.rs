//! Property tests for graph invariants, tensor kernels and the model forward pass.

mod common;

use proptest::prelude::*;

use bhgnn::graph::{random_graph, HetGraph, RandomGraph};
use bhgnn::model::{model_forward, Components, ModelInput, ModelParams, ModelSpec, Task};
use bhgnn::tensor::{matmul, Matrix, SparseMatrix, Tape};
use common::{fixture, oracle_layer};

fn shape() -> impl Strategy<Value = RandomGraph> {
    (1usize..40, 0usize..120, 1usize..4, 1usize..5, any::<bool>()).prop_map(
        |(nodes, edges, relations, feature_dim, weighted)| RandomGraph {
            nodes,
            edges,
            relations,
            feature_dim,
            classes: 3,
            weighted,
        },
    )
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

fn row_bits(m: &Matrix) -> Vec<Vec<u64>> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|x| x.to_bits()).collect())
        .collect()
}

fn spec(g: &HetGraph, dims: Vec<usize>, gamma: f64, task: Task) -> ModelSpec {
    ModelSpec {
        task,
        dims,
        num_relations: g.num_relations(),
        num_bases: 2,
        gamma,
        components: Components::default(),
        alpha_beta_init: (0.8, 0.6),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_in_degree_equals_mean_out_degree(s in shape(), seed in 0u64..1000) {
        let g = random_graph(s, seed);
        let n = g.num_nodes();
        let din: usize = (0..n).map(|i| g.in_degree(i)).sum();
        let dout: usize = (0..n).map(|i| g.out_degree(i)).sum();
        prop_assert_eq!(din, dout);
        prop_assert_eq!(din, g.num_edges());
    }

    #[test]
    fn corruption_keeps_structure(s in shape(), seed in 0u64..1000, c in 0u64..1000) {
        let g = random_graph(s, seed);
        let f = g.corrupt(c);
        prop_assert_eq!(f.num_nodes(), g.num_nodes());
        prop_assert_eq!(f.num_edges(), g.num_edges());
        prop_assert_eq!(f.num_relations(), g.num_relations());
        let key = |h: &HetGraph| sorted(h.edges().iter().map(|e| (e.relation, e.weight.to_bits())).collect());
        prop_assert_eq!(key(&f), key(&g));
        let outs = |h: &HetGraph| (0..h.num_nodes()).map(|i| h.out_degree(i)).collect::<Vec<_>>();
        prop_assert_eq!(outs(&f), outs(&g));
        let ins = |h: &HetGraph| sorted((0..h.num_nodes()).map(|i| h.in_degree(i)).collect());
        prop_assert_eq!(ins(&f), ins(&g));
        prop_assert_eq!(sorted(row_bits(f.features())), sorted(row_bits(g.features())));
        prop_assert_eq!(f.labels(), g.labels());
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 5)) {
        let tape = Tape::new();
        let p = tape.constant(x).softmax_row().unwrap().value();
        for r in 0..p.rows() {
            prop_assert!(p.row(r).iter().all(|&v| v > 0.0));
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn row_normalization_gives_unit_rows(x in matrix(6, 3)) {
        let tape = Tape::new();
        let y = tape.constant(x.clone()).row_l2_normalize().unwrap().value();
        for r in 0..y.rows() {
            let before: f64 = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            let after: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if before > 0.0 {
                prop_assert!((after - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(after, 0.0);
            }
        }
    }

    #[test]
    fn spmm_matches_dense(
        trip in prop::collection::vec((0usize..7, 0usize..5, -2.0f64..2.0), 0..30),
        b in matrix(5, 3),
    ) {
        let sp = SparseMatrix::from_triplets(7, 5, trip).unwrap();
        prop_assert!(sp.spmm(&b).max_abs_diff(&matmul(&sp.to_dense(), &b)) < 1e-12);
    }

    #[test]
    fn forward_is_permutation_equivariant(
        s in shape(),
        seed in 0u64..1000,
        gamma in prop_oneof![Just(0.0), 0.05f64..0.95],
        perm_seed in any::<u64>(),
    ) {
        let g = random_graph(s, seed);
        let n = g.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        }
        let params = ModelParams::init(spec(&g, vec![s.feature_dim, 4, 3], gamma, Task::Classify), seed).unwrap();
        let out = model_forward(&params, &ModelInput::new(&g)).unwrap();
        let moved = model_forward(&params, &ModelInput::new(&g.permute_nodes(&perm))).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for k in 0..out.cols() {
                prop_assert!((out.get(i, k) - moved.get(p, k)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn stacked_forward_matches_dense_oracle_on_toy6() {
    let g = fixture("toy6");
    for gamma in [0.0, 0.3] {
        for seed in 0..5 {
            let params = ModelParams::init(
                spec(&g, vec![g.feature_dim(), 4, 4, 2], gamma, Task::Cluster),
                seed,
            )
            .unwrap();
            let mut h = g.features().clone();
            for l in 0..params.layers.len() {
                h = oracle_layer(&g, &h, &params, l);
            }
            let z = model_forward(&params, &ModelInput::new(&g)).unwrap();
            assert!(
                z.max_abs_diff(&h) < 1e-12,
                "γ={gamma} seed={seed}: {}",
                z.max_abs_diff(&h)
            );
        }
    }
}

#[test]
fn ablated_forward_matches_dense_oracle() {
    let g = fixture("toy6");
    for (nodal, outgoing) in [(false, true), (true, false), (false, false)] {
        let mut s = spec(&g, vec![g.feature_dim(), 3], 0.2, Task::Cluster);
        s.components = Components {
            nodal,
            outgoing,
            ..Components::default()
        };
        let params = ModelParams::init(s, 7).unwrap();
        let z = model_forward(&params, &ModelInput::new(&g)).unwrap();
        assert!(z.max_abs_diff(&oracle_layer(&g, g.features(), &params, 0)) < 1e-12);
    }
}
