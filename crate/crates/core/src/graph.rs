//! Directed heterogeneous multigraphs.
//!
//! Edges follow the convention `A[i][j] = weight of edge j → i`: the
//! destination indexes adjacency rows. Both incoming and outgoing adjacency
//! are kept in CSR layout, grouped by relation inside each node's range.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge record {record}: node {node} out of range (n = {num_nodes})")]
    NodeOutOfRange {
        record: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("edge record {record}: weight {weight} is not positive")]
    NonPositiveWeight { record: usize, weight: f64 },
    #[error("feature matrix has {found} rows, expected {expected}")]
    FeatureRows { expected: usize, found: usize },
    #[error("{what} has {found} entries, expected {expected}")]
    PerNodeLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("graph has no nodes")]
    Empty,
}

/// One directed edge `src → dst`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: usize,
    pub weight: f64,
}

/// Adjacency entry: the other endpoint, the relation and the edge weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub relation: usize,
    pub weight: f64,
}

/// Immutable directed weighted multigraph with typed nodes and relations.
#[derive(Clone, Debug)]
pub struct HetGraph {
    num_nodes: usize,
    num_relations: usize,
    num_types: usize,
    num_classes: usize,
    node_type: Vec<usize>,
    node_label: Vec<Option<usize>>,
    features: Matrix,
    edges: Vec<Edge>,
    weighted: bool,
    in_offsets: Vec<usize>,
    in_entries: Vec<Neighbor>,
    out_offsets: Vec<usize>,
    out_entries: Vec<Neighbor>,
    in_weight_sum: Vec<f64>,
    out_weight_sum: Vec<f64>,
}

/// Builds a graph. With `weighted == false` every weight is forced to 1
/// before validation.
pub fn build_graph(
    edges: Vec<Edge>,
    features: Matrix,
    node_types: Vec<usize>,
    node_labels: Vec<Option<usize>>,
    weighted: bool,
) -> Result<HetGraph, GraphError> {
    let n = features.rows();
    if node_types.len() != n {
        return Err(GraphError::PerNodeLength {
            what: "node types",
            expected: n,
            found: node_types.len(),
        });
    }
    if node_labels.len() != n {
        return Err(GraphError::PerNodeLength {
            what: "node labels",
            expected: n,
            found: node_labels.len(),
        });
    }
    let mut edges = edges;
    for (record, e) in edges.iter_mut().enumerate() {
        for node in [e.src, e.dst] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange {
                    record,
                    node,
                    num_nodes: n,
                });
            }
        }
        if !weighted {
            e.weight = 1.0;
        }
        if !(e.weight > 0.0) || !e.weight.is_finite() {
            return Err(GraphError::NonPositiveWeight {
                record,
                weight: e.weight,
            });
        }
    }

    let num_relations = edges
        .iter()
        .map(|e| e.relation + 1)
        .max()
        .unwrap_or(1)
        .max(1);
    let num_types = node_types.iter().map(|t| t + 1).max().unwrap_or(0);
    let num_classes = node_labels
        .iter()
        .flatten()
        .map(|l| l + 1)
        .max()
        .unwrap_or(0);

    let (in_offsets, in_entries) = compress(n, &edges, |e| (e.dst, e.src));
    let (out_offsets, out_entries) = compress(n, &edges, |e| (e.src, e.dst));

    let mut in_weight_sum = vec![0.0; n];
    let mut out_weight_sum = vec![0.0; n];
    for e in &edges {
        in_weight_sum[e.dst] += e.weight;
        out_weight_sum[e.src] += e.weight;
    }

    Ok(HetGraph {
        num_nodes: n,
        num_relations,
        num_types,
        num_classes,
        node_type: node_types,
        node_label: node_labels,
        features,
        edges,
        weighted,
        in_offsets,
        in_entries,
        out_offsets,
        out_entries,
        in_weight_sum,
        out_weight_sum,
    })
}

/// CSR over `key(edge) = (owner, other)`, entries sorted by (relation, other).
fn compress(
    n: usize,
    edges: &[Edge],
    key: impl Fn(&Edge) -> (usize, usize),
) -> (Vec<usize>, Vec<Neighbor>) {
    let mut offsets = vec![0usize; n + 1];
    for e in edges {
        offsets[key(e).0 + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut next = offsets.clone();
    let mut entries = vec![
        Neighbor {
            node: 0,
            relation: 0,
            weight: 0.0
        };
        edges.len()
    ];
    for e in edges {
        let (owner, other) = key(e);
        entries[next[owner]] = Neighbor {
            node: other,
            relation: e.relation,
            weight: e.weight,
        };
        next[owner] += 1;
    }
    for i in 0..n {
        entries[offsets[i]..offsets[i + 1]].sort_by(|a, b| {
            (a.relation, a.node)
                .cmp(&(b.relation, b.node))
                .then(a.weight.total_cmp(&b.weight))
        });
    }
    (offsets, entries)
}

/// Dense relation ids from `(source type, target type)` pairs, numbered in
/// lexicographic order of the pairs that actually occur.
pub fn relations_from_node_types(edges: &[(usize, usize)], node_types: &[usize]) -> Vec<usize> {
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(s, d) in edges {
        pairs.insert((node_types[s], node_types[d]), 0);
    }
    for (k, id) in pairs.values_mut().enumerate() {
        *id = k;
    }
    edges
        .iter()
        .map(|&(s, d)| pairs[&(node_types[s], node_types[d])])
        .collect()
}

impl HetGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_node_types(&self) -> usize {
        self.num_types
    }

    /// Number of classes, `max label + 1`.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.node_label
    }

    /// Nodes that carry a label, ascending.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes)
            .filter(|&i| self.node_label[i].is_some())
            .collect()
    }

    /// `N_in(i)`: sources of edges into `i`, grouped by relation.
    pub fn in_neighbors(&self, i: usize) -> &[Neighbor] {
        &self.in_entries[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    /// `N_out(i)`: targets of edges leaving `i`, grouped by relation.
    pub fn out_neighbors(&self, i: usize) -> &[Neighbor] {
        &self.out_entries[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_offsets[i + 1] - self.in_offsets[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_offsets[i + 1] - self.out_offsets[i]
    }

    /// `A_{i,in}`, total incoming weight per node.
    pub fn in_weight_sum(&self) -> &[f64] {
        &self.in_weight_sum
    }

    /// `A_{j,out}`, total outgoing weight per node.
    pub fn out_weight_sum(&self) -> &[f64] {
        &self.out_weight_sum
    }

    /// Normalized coefficient of a stored edge: `w / (√A_{dst,in} · √A_{src,out})`.
    pub fn edge_norm(&self, e: &Edge) -> f64 {
        e.weight / (self.in_weight_sum[e.dst].sqrt() * self.out_weight_sum[e.src].sqrt())
    }

    /// `A_ij / (√A_{i,in} · √A_{j,out})` for the (possibly parallel) edges
    /// `j → i`. `None` if there is no such edge.
    pub fn norm_coeff(&self, src: usize, dst: usize) -> Option<f64> {
        let a_ij: f64 = self
            .in_neighbors(dst)
            .iter()
            .filter(|nb| nb.node == src)
            .map(|nb| nb.weight)
            .sum();
        if a_ij == 0.0 {
            return None;
        }
        Some(a_ij / (self.in_weight_sum[dst].sqrt() * self.out_weight_sum[src].sqrt()))
    }

    /// Fake graph for contrastive training.
    ///
    /// Draws one permutation `π` and applies it to both feature rows
    /// (`X̃_i = X_{π(i)}`) and adjacency rows (`Ã_{i,:} = A_{π(i),:}`, i.e. an
    /// edge `j → π(i)` becomes `j → i`). Relations and weights are kept.
    pub fn corrupt(&self, seed: u64) -> HetGraph {
        let n = self.num_nodes;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
        let mut inverse = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = self.features.select_rows(&perm);
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                dst: inverse[e.dst],
                ..*e
            })
            .collect();
        build_graph(
            edges,
            features,
            self.node_type.clone(),
            self.node_label.clone(),
            true,
        )
        .expect("permutation of a valid graph is valid")
        .with_flags(self.weighted, self.num_relations)
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> HetGraph {
        let n = self.num_nodes;
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = self.features.select_rows(&inverse);
        let types = inverse.iter().map(|&i| self.node_type[i]).collect();
        let labels = inverse.iter().map(|&i| self.node_label[i]).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..*e
            })
            .collect();
        build_graph(edges, features, types, labels, true)
            .expect("permutation of a valid graph is valid")
            .with_flags(self.weighted, self.num_relations)
    }

    /// Copy with labels removed from the given nodes.
    pub fn without_labels(&self, nodes: &[usize]) -> HetGraph {
        let mut g = self.clone();
        for &i in nodes {
            g.node_label[i] = None;
        }
        g
    }

    /// Copy where every edge carries relation 0.
    pub fn with_uniform_relations(&self) -> HetGraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { relation: 0, ..*e })
            .collect();
        build_graph(
            edges,
            self.features.clone(),
            self.node_type.clone(),
            self.node_label.clone(),
            true,
        )
        .expect("relabelling relations keeps the graph valid")
        .with_flags(self.weighted, 1)
    }

    fn with_flags(mut self, weighted: bool, num_relations: usize) -> HetGraph {
        self.weighted = weighted;
        self.num_relations = self.num_relations.max(num_relations);
        self
    }

    /// Total stored edge weight.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Shape of a synthetic graph drawn by [`random_graph`].
#[derive(Clone, Copy, Debug)]
pub struct RandomGraph {
    pub nodes: usize,
    pub edges: usize,
    pub relations: usize,
    pub feature_dim: usize,
    pub classes: usize,
    /// Draw weights from `[0.5, 3)` instead of using 1.
    pub weighted: bool,
}

/// Uniformly random multigraph: features uniform on `[−1, 1)`, one random
/// type and label per node. Self-loops may occur.
pub fn random_graph(shape: RandomGraph, seed: u64) -> HetGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.nodes.max(1);
    let edges = (0..shape.edges)
        .map(|_| Edge {
            src: rng.random_range(0..n),
            dst: rng.random_range(0..n),
            relation: rng.random_range(0..shape.relations.max(1)),
            weight: if shape.weighted {
                rng.random_range(0.5..3.0)
            } else {
                1.0
            },
        })
        .collect();
    let features = Matrix::from_fn(n, shape.feature_dim, |_, _| rng.random_range(-1.0..1.0));
    let types = (0..n).map(|_| rng.random_range(0..2)).collect();
    let labels = (0..n)
        .map(|_| Some(rng.random_range(0..shape.classes.max(1))))
        .collect();
    build_graph(edges, features, types, labels, shape.weighted)
        .expect("random graph is valid")
        .with_flags(shape.weighted, shape.relations.max(1))
}
