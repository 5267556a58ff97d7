//! Trainable state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Task};
use crate::tensor::{glorot_init, Matrix, Tape, Tensor};

/// Message components switched on in every layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    /// Self term `W₀·h_i`.
    pub nodal: bool,
    /// Outgoing term `β·h_{i,out}`.
    pub outgoing: bool,
    /// Whether α and β receive gradient updates.
    pub train_alpha_beta: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            nodal: true,
            outgoing: true,
            train_alpha_beta: true,
        }
    }
}

/// Shape and hyperparameters of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: Task,
    /// Widths `d⁰ … d^L`; one convolution layer per consecutive pair.
    pub dims: Vec<usize>,
    pub num_relations: usize,
    pub num_bases: usize,
    pub gamma: f64,
    pub components: Components,
    /// Initial `(α, β)`.
    pub alpha_beta_init: (f64, f64),
}

impl ModelSpec {
    /// Widths for `layers` counted the conventional way: `layers − 1`
    /// convolutions, hidden width `hidden`, final width `output`.
    pub fn dims_for(
        layers: usize,
        input: usize,
        hidden: usize,
        output: usize,
    ) -> Result<Vec<usize>, ModelError> {
        if layers < 2 {
            return Err(ModelError::TooFewLayers(layers));
        }
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, layers - 2));
        dims.push(output);
        Ok(dims)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ModelError::InvalidGamma(self.gamma));
        }
        if self.dims.len() < 2 {
            return Err(ModelError::TooFewLayers(self.dims.len()));
        }
        if self.dims.contains(&0) || self.num_relations == 0 || self.num_bases == 0 {
            return Err(ModelError::ZeroDimension);
        }
        Ok(())
    }
}

/// One convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// Basis matrices `V_b`, each `d^{l+1} × d^l`.
    pub bases: Vec<Matrix>,
    /// Relation coefficients `a_rb`, `|R| × B`.
    pub coeffs: Matrix,
    /// Self weight `W₀`, `d^{l+1} × d^l`.
    pub self_weight: Matrix,
    /// PReLU slope, `1 × 1`.
    pub prelu_slope: Matrix,
}

impl LayerParams {
    pub fn input_dim(&self) -> usize {
        self.self_weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.self_weight.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    /// `W_r = Σ_b a_rb · V_b`.
    pub fn relation_weight(&self, r: usize) -> Matrix {
        assert!(r < self.num_relations(), "relation {r} out of range");
        let mut w = Matrix::zeros(self.output_dim(), self.input_dim());
        for (b, v) in self.bases.iter().enumerate() {
            w.add_scaled(v, self.coeffs.get(r, b));
        }
        w
    }
}

/// All trainable state of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub layers: Vec<LayerParams>,
    /// Incoming-message coefficient, `1 × 1`.
    pub alpha: Matrix,
    /// Outgoing-message coefficient, `1 × 1`.
    pub beta: Matrix,
    /// Bilinear scoring matrix `M`, present for clustering.
    pub discriminator: Option<Matrix>,
}

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

impl ModelParams {
    /// Glorot-initialized parameters; every matrix draws from its own stream
    /// derived from `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        if spec.num_bases > 4 * spec.num_relations && spec.num_bases > 8 {
            log::warn!(
                "{} bases for {} relations is wasteful",
                spec.num_bases,
                spec.num_relations
            );
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || seeds.random::<u64>();
        let layers = spec
            .dims
            .windows(2)
            .map(|w| {
                let (din, dout) = (w[0], w[1]);
                LayerParams {
                    bases: (0..spec.num_bases)
                        .map(|_| glorot_init(dout, din, next()))
                        .collect(),
                    coeffs: glorot_init(spec.num_relations, spec.num_bases, next()),
                    self_weight: glorot_init(dout, din, next()),
                    prelu_slope: Matrix::scalar(PRELU_INIT),
                }
            })
            .collect();
        let out = *spec.dims.last().expect("validated");
        let discriminator = (spec.task == Task::Cluster).then(|| glorot_init(out, out, next()));
        let (a, b) = spec.alpha_beta_init;
        Ok(Self {
            spec,
            layers,
            alpha: Matrix::scalar(a),
            beta: Matrix::scalar(b),
            discriminator,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LayerParams::output_dim)
    }

    /// Every parameter matrix with a stable name, in canonical order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (b, v) in layer.bases.iter().enumerate() {
                out.push((format!("layer{l}.basis{b}"), v));
            }
            out.push((format!("layer{l}.coeffs"), &layer.coeffs));
            out.push((format!("layer{l}.self_weight"), &layer.self_weight));
            out.push((format!("layer{l}.prelu_slope"), &layer.prelu_slope));
        }
        out.push(("alpha".to_string(), &self.alpha));
        out.push(("beta".to_string(), &self.beta));
        if let Some(m) = &self.discriminator {
            out.push(("discriminator".to_string(), m));
        }
        out
    }

    /// Mutable view in the order of [`ModelParams::named`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.bases.iter_mut());
            out.push(&mut layer.coeffs);
            out.push(&mut layer.self_weight);
            out.push(&mut layer.prelu_slope);
        }
        out.push(&mut self.alpha);
        out.push(&mut self.beta);
        if let Some(m) = &mut self.discriminator {
            out.push(m);
        }
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.named().iter().map(|(_, m)| m.shape()).collect()
    }

    /// Records every parameter on `tape`. α and β become constants when
    /// they are frozen.
    pub fn register<'t>(&self, tape: &'t Tape) -> ParamLeaves<'t> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerLeaves {
                bases: l.bases.iter().map(|v| tape.param(v.clone())).collect(),
                coeffs: tape.param(l.coeffs.clone()),
                self_weight: tape.param(l.self_weight.clone()),
                prelu_slope: tape.param(l.prelu_slope.clone()),
            })
            .collect();
        let train_ab = self.spec.components.train_alpha_beta;
        ParamLeaves {
            layers,
            alpha: tape.leaf(self.alpha.clone(), train_ab),
            beta: tape.leaf(self.beta.clone(), train_ab),
            discriminator: self.discriminator.as_ref().map(|m| tape.param(m.clone())),
        }
    }

    /// Same values as constants, for gradient-free evaluation.
    pub fn register_constant<'t>(&self, tape: &'t Tape) -> ParamLeaves<'t> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerLeaves {
                bases: l.bases.iter().map(|v| tape.constant(v.clone())).collect(),
                coeffs: tape.constant(l.coeffs.clone()),
                self_weight: tape.constant(l.self_weight.clone()),
                prelu_slope: tape.constant(l.prelu_slope.clone()),
            })
            .collect();
        ParamLeaves {
            layers,
            alpha: tape.constant(self.alpha.clone()),
            beta: tape.constant(self.beta.clone()),
            discriminator: self
                .discriminator
                .as_ref()
                .map(|m| tape.constant(m.clone())),
        }
    }

    /// Rebuilds structured handles from the order of [`ModelParams::named`].
    pub fn unflatten<'t>(&self, flat: &[Tensor<'t>]) -> ParamLeaves<'t> {
        let mut it = flat.iter().copied();
        let mut next = || {
            it.next()
                .expect("flat handle list matches the parameter layout")
        };
        let layers = self
            .layers
            .iter()
            .map(|l| LayerLeaves {
                bases: (0..l.bases.len()).map(|_| next()).collect(),
                coeffs: next(),
                self_weight: next(),
                prelu_slope: next(),
            })
            .collect();
        let alpha = next();
        let beta = next();
        let discriminator = self.discriminator.as_ref().map(|_| next());
        ParamLeaves {
            layers,
            alpha,
            beta,
            discriminator,
        }
    }

    /// Order-sensitive FNV-1a hash over every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, m) in self.named() {
            for v in m.as_slice() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Tape handles of one layer's parameters.
#[derive(Clone, Debug)]
pub struct LayerLeaves<'t> {
    pub bases: Vec<Tensor<'t>>,
    pub coeffs: Tensor<'t>,
    pub self_weight: Tensor<'t>,
    pub prelu_slope: Tensor<'t>,
}

/// Tape handles of a whole model.
#[derive(Clone, Debug)]
pub struct ParamLeaves<'t> {
    pub layers: Vec<LayerLeaves<'t>>,
    pub alpha: Tensor<'t>,
    pub beta: Tensor<'t>,
    pub discriminator: Option<Tensor<'t>>,
}

impl<'t> ParamLeaves<'t> {
    /// Handles in the order of [`ModelParams::named`].
    pub fn flatten(&self) -> Vec<Tensor<'t>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.bases.iter().copied());
            out.push(l.coeffs);
            out.push(l.self_weight);
            out.push(l.prelu_slope);
        }
        out.push(self.alpha);
        out.push(self.beta);
        out.extend(self.discriminator);
        out
    }

    /// Gradients after backward, `None` for frozen or unused parameters.
    pub fn grads(&self) -> Vec<Option<Matrix>> {
        self.flatten().iter().map(|t| t.grad()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(task: Task) -> ModelSpec {
        ModelSpec {
            task,
            dims: vec![5, 4, 3],
            num_relations: 2,
            num_bases: 2,
            gamma: 0.2,
            components: Components::default(),
            alpha_beta_init: (1.0, 1.0),
        }
    }

    #[test]
    fn dims_follow_layer_convention() {
        assert_eq!(
            ModelSpec::dims_for(4, 10, 64, 3).unwrap(),
            vec![10, 64, 64, 3]
        );
        assert_eq!(ModelSpec::dims_for(2, 10, 64, 3).unwrap(), vec![10, 3]);
        assert!(ModelSpec::dims_for(1, 10, 64, 3).is_err());
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = ModelParams::init(spec(Task::Cluster), 7).unwrap();
        let b = ModelParams::init(spec(Task::Cluster), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers[0].bases[0].shape(), (4, 5));
        assert_eq!(a.layers[1].coeffs.shape(), (2, 2));
        assert_eq!(a.discriminator.as_ref().unwrap().shape(), (3, 3));
        assert_eq!(a.layers[0].prelu_slope.item(), 0.25);
        assert!(ModelParams::init(spec(Task::Classify), 7)
            .unwrap()
            .discriminator
            .is_none());
        assert_ne!(
            a.fingerprint(),
            ModelParams::init(spec(Task::Cluster), 8)
                .unwrap()
                .fingerprint()
        );
    }

    #[test]
    fn rejects_bad_gamma() {
        let mut s = spec(Task::Classify);
        s.gamma = 1.5;
        assert!(matches!(
            ModelParams::init(s, 0),
            Err(ModelError::InvalidGamma(_))
        ));
    }

    #[test]
    fn relation_weight_combines_bases() {
        let mut p = ModelParams::init(spec(Task::Classify), 1).unwrap();
        let layer = &mut p.layers[0];
        layer.bases[1] = layer.bases[0].clone();
        layer.coeffs = Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 0.0]]);
        assert_eq!(layer.relation_weight(0), Matrix::zeros(4, 5));
        assert_eq!(layer.relation_weight(1), layer.bases[0]);
    }

    #[test]
    fn flatten_matches_named_order() {
        let p = ModelParams::init(spec(Task::Cluster), 3).unwrap();
        let tape = Tape::new();
        let leaves = p.register(&tape);
        let flat = leaves.flatten();
        let named = p.named();
        assert_eq!(flat.len(), named.len());
        for (t, (_, m)) in flat.iter().zip(named) {
            assert_eq!(&*t.value(), m);
        }
    }
}
