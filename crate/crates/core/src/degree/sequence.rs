//! Degree sequences and their empirical CCDF.

use serde::{Deserialize, Serialize};

use super::DegreeError;
use crate::graph::HetGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = DegreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in" => Ok(Direction::In),
            "out" => Ok(Direction::Out),
            other => Err(DegreeError::UnknownDirection(other.to_string())),
        }
    }
}

/// One edge count per node.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeSequence {
    pub direction: Direction,
    pub values: Vec<u64>,
}

impl DegreeSequence {
    /// Edge counts per node. Parallel edges count separately; weights are ignored.
    pub fn from_graph(graph: &HetGraph, direction: Direction) -> Self {
        let values = (0..graph.num_nodes())
            .map(|i| match direction {
                Direction::In => graph.in_degree(i),
                Direction::Out => graph.out_degree(i),
            } as u64)
            .collect();
        Self { direction, values }
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<u64>() as f64 / self.values.len() as f64
    }

    /// `(k, F(k))` for `k = 0..=k_max + 1`, where `F(k)` is the fraction of
    /// nodes with degree at least `k`.
    pub fn ccdf(&self) -> Result<Vec<(u64, f64)>, DegreeError> {
        let kmax = *self.values.iter().max().ok_or(DegreeError::EmptySequence)?;
        let mut counts = vec![0u64; kmax as usize + 2];
        for &v in &self.values {
            counts[v as usize] += 1;
        }
        let n = self.values.len() as f64;
        let mut at_least = 0u64;
        let mut out = vec![(0u64, 0.0); counts.len()];
        for k in (0..counts.len()).rev() {
            at_least += counts[k];
            out[k] = (k as u64, at_least as f64 / n);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: Vec<u64>) -> DegreeSequence {
        DegreeSequence {
            direction: Direction::In,
            values,
        }
    }

    #[test]
    fn ccdf_hand_example() {
        let f = seq(vec![1, 1, 2, 3]).ccdf().unwrap();
        assert_eq!(f, vec![(0, 1.0), (1, 1.0), (2, 0.5), (3, 0.25), (4, 0.0)]);
    }

    #[test]
    fn ccdf_point_mass() {
        let f = seq(vec![3; 5]).ccdf().unwrap();
        assert_eq!(f, vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, 0.0)]);
    }

    #[test]
    fn ccdf_single_zero() {
        assert_eq!(seq(vec![0]).ccdf().unwrap(), vec![(0, 1.0), (1, 0.0)]);
    }

    #[test]
    fn ccdf_rejects_empty() {
        assert!(matches!(
            seq(vec![]).ccdf(),
            Err(DegreeError::EmptySequence)
        ));
    }
}
