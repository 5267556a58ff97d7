//! Bidirectional aggregation, the teleport update and the stacked forward pass.

use std::rc::Rc;

use super::{LayerLeaves, LayerParams, ModelError, ModelParams, ParamLeaves, Task};
use crate::graph::HetGraph;
use crate::tensor::{basis_spmm, matmul_a_bt, Matrix, SparseMatrix, Tape, Tensor};

/// Feature matrices at or below this density enter the first layer sparse.
pub const SPARSE_FEATURE_DENSITY: f64 = 0.25;

/// Constant operators derived from a graph.
#[derive(Clone, Debug)]
pub struct Propagation {
    num_nodes: usize,
    /// `S_r[i, j] = Σ norm_coeff(j → i)` over edges of relation `r`.
    incoming: Rc<Vec<SparseMatrix>>,
    /// Diagonal `c_{i,r} = Σ_k norm_coeff(i → k)` over edges of relation `r`.
    outgoing: Rc<Vec<SparseMatrix>>,
}

impl Propagation {
    pub fn new(graph: &HetGraph) -> Self {
        let (n, rels) = (graph.num_nodes(), graph.num_relations());
        let mut triplets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); rels];
        let mut out_coeff = vec![vec![0.0; n]; rels];
        for e in graph.edges() {
            let c = graph.edge_norm(e);
            triplets[e.relation].push((e.dst, e.src, c));
            out_coeff[e.relation][e.src] += c;
        }
        let incoming = triplets
            .into_iter()
            .map(|t| SparseMatrix::from_triplets(n, n, t).expect("edge endpoints are in range"))
            .collect();
        let outgoing = out_coeff
            .iter()
            .map(|d| SparseMatrix::diagonal(d))
            .collect();
        Self {
            num_nodes: n,
            incoming: Rc::new(incoming),
            outgoing: Rc::new(outgoing),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.incoming.len()
    }

    pub fn incoming(&self) -> &[SparseMatrix] {
        &self.incoming
    }

    pub fn outgoing(&self) -> &[SparseMatrix] {
        &self.outgoing
    }
}

/// Node features as fed to the first layer.
#[derive(Clone, Debug)]
pub enum Features {
    Dense(Matrix),
    Sparse(Rc<SparseMatrix>),
}

impl Features {
    /// Sparse storage when the density is at most [`SPARSE_FEATURE_DENSITY`].
    pub fn from_matrix(x: &Matrix) -> Self {
        if x.density() <= SPARSE_FEATURE_DENSITY {
            Features::Sparse(Rc::new(SparseMatrix::from_dense(x)))
        } else {
            Features::Dense(x.clone())
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(m) => m.cols(),
            Features::Sparse(s) => s.cols(),
        }
    }
}

/// Everything the forward pass needs from a graph.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub features: Features,
    pub propagation: Propagation,
}

impl ModelInput {
    pub fn new(graph: &HetGraph) -> Self {
        Self {
            features: Features::from_matrix(graph.features()),
            propagation: Propagation::new(graph),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.propagation.num_nodes()
    }
}

/// `h_{i,in} = Σ_r Σ_{j ∈ N_in^r(i)} norm(j→i) · W_r h_j`, one spmm per
/// relation against `H·W_rᵀ`.
pub fn aggregate_in(
    graph: &HetGraph,
    h: &Matrix,
    layer: &LayerParams,
) -> Result<Matrix, ModelError> {
    check_layer_input(graph, h, layer)?;
    let prop = Propagation::new(graph);
    let mut out = Matrix::zeros(graph.num_nodes(), layer.output_dim());
    for (r, s) in prop.incoming().iter().enumerate() {
        out.add_assign(&s.spmm(&matmul_a_bt(h, &layer.relation_weight(r))));
    }
    Ok(out)
}

/// `h_{i,out} = Σ_r c_{i,r} · W_r h_i` with `c_{i,r} = Σ_{k ∈ N_out^r(i)} norm(i→k)`.
pub fn aggregate_out(
    graph: &HetGraph,
    h: &Matrix,
    layer: &LayerParams,
) -> Result<Matrix, ModelError> {
    check_layer_input(graph, h, layer)?;
    let prop = Propagation::new(graph);
    let mut out = Matrix::zeros(graph.num_nodes(), layer.output_dim());
    for (r, s) in prop.outgoing().iter().enumerate() {
        out.add_assign(&s.spmm(&matmul_a_bt(h, &layer.relation_weight(r))));
    }
    Ok(out)
}

fn check_layer_input(graph: &HetGraph, h: &Matrix, layer: &LayerParams) -> Result<(), ModelError> {
    if h.rows() != graph.num_nodes() || h.cols() != layer.input_dim() {
        return Err(ModelError::InputShape {
            expected: (graph.num_nodes(), layer.input_dim()),
            found: h.shape(),
        });
    }
    if graph.num_relations() > layer.num_relations() {
        return Err(ModelError::RelationCount {
            graph: graph.num_relations(),
            model: layer.num_relations(),
        });
    }
    Ok(())
}

/// Layer input on the tape.
#[derive(Clone, Copy, Debug)]
enum LayerInput<'a, 't> {
    Dense(Tensor<'t>),
    Sparse(&'a Rc<SparseMatrix>),
}

impl<'t> LayerInput<'_, 't> {
    /// `input · Wᵀ`.
    fn times_t(self, w: Tensor<'t>) -> Result<Tensor<'t>, ModelError> {
        Ok(match self {
            LayerInput::Dense(h) => h.matmul_t(w)?,
            LayerInput::Sparse(x) => w.transpose()?.spmm_by(Rc::clone(x))?,
        })
    }
}

/// Tape-level values shared by all layers.
#[derive(Clone, Copy)]
struct Shared<'a, 't> {
    params: &'a ModelParams,
    alpha: Tensor<'t>,
    beta: Tensor<'t>,
    prop: &'a Propagation,
}

fn layer_on_tape<'t>(
    shared: Shared<'_, 't>,
    layer: &LayerLeaves<'t>,
    input: LayerInput<'_, 't>,
) -> Result<Tensor<'t>, ModelError> {
    let components = shared.params.spec.components;
    let gamma = shared.params.gamma();
    let products = layer
        .bases
        .iter()
        .map(|&v| input.times_t(v))
        .collect::<Result<Vec<_>, _>>()?;

    let h_in = basis_spmm(Rc::clone(&shared.prop.incoming), layer.coeffs, &products)?;
    let mut u = h_in.scalar_mul(shared.alpha)?;
    if components.nodal {
        u = input.times_t(layer.self_weight)?.add(u)?;
    }
    if components.outgoing {
        let h_out = basis_spmm(Rc::clone(&shared.prop.outgoing), layer.coeffs, &products)?;
        u = u.sub(h_out.scalar_mul(shared.beta)?)?;
    }
    if gamma > 0.0 {
        u = u
            .scale(1.0 - gamma)?
            .add_scalar(gamma / shared.prop.num_nodes() as f64)?;
    }
    Ok(u.prelu(layer.prelu_slope)?.row_l2_normalize()?)
}

fn check_model_input(params: &ModelParams, input: &ModelInput) -> Result<(), ModelError> {
    let first = params.layers.first().ok_or(ModelError::TooFewLayers(0))?;
    if input.features.dim() != first.input_dim() {
        return Err(ModelError::FeatureDim {
            expected: first.input_dim(),
            found: input.features.dim(),
        });
    }
    if input.propagation.num_relations() > first.num_relations() {
        return Err(ModelError::RelationCount {
            graph: input.propagation.num_relations(),
            model: first.num_relations(),
        });
    }
    for w in params.layers.windows(2) {
        if w[0].output_dim() != w[1].input_dim() {
            return Err(ModelError::BrokenChain {
                produced: w[0].output_dim(),
                expected: w[1].input_dim(),
            });
        }
    }
    Ok(())
}

/// Pads relation operators with empty matrices up to the model's relation count.
fn padded(prop: &Propagation, rels: usize) -> Propagation {
    if prop.num_relations() == rels {
        return prop.clone();
    }
    let n = prop.num_nodes;
    let pad = |ops: &[SparseMatrix]| {
        let mut v = ops.to_vec();
        v.resize(rels, SparseMatrix::empty(n, n));
        Rc::new(v)
    };
    Propagation {
        num_nodes: n,
        incoming: pad(&prop.incoming),
        outgoing: pad(&prop.outgoing),
    }
}

/// Final-layer embeddings `H^L` on the tape; `leaves` must come from `params`.
pub fn embed<'t>(
    params: &ModelParams,
    leaves: &ParamLeaves<'t>,
    tape: &'t Tape,
    input: &ModelInput,
) -> Result<Tensor<'t>, ModelError> {
    check_model_input(params, input)?;
    let prop = padded(&input.propagation, params.layers[0].num_relations());
    let shared = Shared {
        params,
        alpha: leaves.alpha,
        beta: leaves.beta,
        prop: &prop,
    };
    let dense_first;
    let first = match &input.features {
        Features::Dense(x) => {
            dense_first = tape.constant(x.clone());
            LayerInput::Dense(dense_first)
        }
        Features::Sparse(x) => LayerInput::Sparse(x),
    };
    let mut h = layer_on_tape(shared, &leaves.layers[0], first)?;
    for layer in &leaves.layers[1..] {
        h = layer_on_tape(shared, layer, LayerInput::Dense(h))?;
    }
    Ok(h)
}

/// Task output on the tape: log-probabilities for classification, raw
/// embeddings for clustering.
pub fn output<'t>(
    params: &ModelParams,
    leaves: &ParamLeaves<'t>,
    tape: &'t Tape,
    input: &ModelInput,
) -> Result<Tensor<'t>, ModelError> {
    let h = embed(params, leaves, tape, input)?;
    Ok(match params.spec.task {
        Task::Classify => h.log_softmax_row()?,
        Task::Cluster => h,
    })
}

/// Gradient-free [`output`].
pub fn model_forward(params: &ModelParams, input: &ModelInput) -> Result<Matrix, ModelError> {
    let tape = Tape::new();
    let leaves = params.register_constant(&tape);
    Ok(output(params, &leaves, &tape, input)?
        .value()
        .as_ref()
        .clone())
}

/// One layer on plain matrices: `PReLU(γ/n·𝟙 + (1−γ)·u)` then row
/// normalization, with `u = W₀h + α·h_in − β·h_out`. Honors the ablation
/// switches of `params`.
pub fn layer_forward(
    graph: &HetGraph,
    h: &Matrix,
    params: &ModelParams,
    layer_index: usize,
) -> Result<Matrix, ModelError> {
    let layer = params
        .layers
        .get(layer_index)
        .ok_or(ModelError::TooFewLayers(layer_index))?;
    check_layer_input(graph, h, layer)?;
    let tape = Tape::new();
    let leaves = params.register_constant(&tape);
    let prop = padded(&Propagation::new(graph), layer.num_relations());
    let shared = Shared {
        params,
        alpha: leaves.alpha,
        beta: leaves.beta,
        prop: &prop,
    };
    let input = tape.constant(h.clone());
    let out = layer_on_tape(
        shared,
        &leaves.layers[layer_index],
        LayerInput::Dense(input),
    )?;
    Ok(out.value().as_ref().clone())
}
