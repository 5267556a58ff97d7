//! Seeded train/validation/test splits over labeled nodes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::graph::HetGraph;

/// Minimum labeled nodes for a split.
pub const MIN_LABELED: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the labeled nodes with `seed` and cuts them by `ratios`.
/// Train and validation sizes are `⌊n·r⌋`; the remainder goes to test.
pub fn split_nodes(graph: &HetGraph, ratios: [f64; 3], seed: u64) -> Result<Split, HarnessError> {
    let mut nodes = graph.labeled_nodes();
    if nodes.len() < MIN_LABELED {
        return Err(HarnessError::Invalid(format!(
            "{} labeled nodes, at least {MIN_LABELED} are needed for a split",
            nodes.len()
        )));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HarnessError::Config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = nodes.len() as f64;
    let n_train = (n * ratios[0] + 1e-9).floor() as usize;
    let n_val = ((n * ratios[1] + 1e-9).floor() as usize).min(nodes.len() - n_train);
    if n_train == 0 {
        return Err(HarnessError::Invalid("the training split is empty".into()));
    }
    let test = nodes.split_off(n_train + n_val);
    let val = nodes.split_off(n_train);
    Ok(Split {
        train: nodes,
        val,
        test,
    })
}
