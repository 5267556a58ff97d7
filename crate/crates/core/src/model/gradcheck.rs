//! End-to-end finite-difference check through a small model.

use std::collections::BTreeMap;

use super::{output, Components, ModelError, ModelInput, ModelParams, ModelSpec, Task};
use crate::graph::{random_graph, RandomGraph};
use crate::tensor::gradcheck::{check_each, GradCheck};
use crate::tensor::Tape;

/// Checks every parameter group of a 2-convolution classifier on a random
/// 5-node graph. One entry per group, worst error within the group.
pub fn model_gradcheck(seed: u64, tolerance: f64) -> Result<Vec<GradCheck>, ModelError> {
    let graph = random_graph(
        RandomGraph {
            nodes: 5,
            edges: 9,
            relations: 2,
            feature_dim: 3,
            classes: 3,
            weighted: true,
        },
        seed,
    );
    let spec = ModelSpec {
        task: Task::Classify,
        dims: vec![3, 4, 3],
        num_relations: 2,
        num_bases: 2,
        gamma: 0.3,
        components: Components::default(),
        alpha_beta_init: (0.8, 0.6),
    };
    let params = ModelParams::init(spec, seed.wrapping_add(1))?;
    let input = ModelInput::new(&graph);
    let labels: Vec<usize> = graph.labels().iter().map(|l| l.unwrap_or(0)).collect();
    let inputs: Vec<_> = params.named().into_iter().map(|(_, m)| m.clone()).collect();

    let errors = check_each(&inputs, |tape: &Tape, flat| {
        let leaves = params.unflatten(flat);
        let z = output(&params, &leaves, tape, &input)?;
        Ok::<_, ModelError>(z.pick_per_row(&labels)?.mean()?.scale(-1.0)?)
    })?;

    let mut groups: BTreeMap<&'static str, f64> = BTreeMap::new();
    for ((name, _), err) in params.named().iter().zip(errors) {
        let group = match name.rsplit('.').next().unwrap_or(name) {
            n if n.starts_with("basis") => "bases",
            "coeffs" => "coeffs",
            "self_weight" => "self_weight",
            "prelu_slope" => "prelu_slope",
            "alpha" => "alpha",
            "beta" => "beta",
            _ => "other",
        };
        let e = groups.entry(group).or_insert(0.0);
        *e = e.max(err);
    }
    Ok(groups
        .into_iter()
        .map(|(name, max_rel_error)| GradCheck {
            name: format!("model.{name}"),
            max_rel_error,
            tolerance,
        })
        .collect())
}
