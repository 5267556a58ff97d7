//! Training configuration and its `key = value` file format.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{Components, Task};

/// How edge relations are assigned when a dataset is loaded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationMode {
    /// The relation column when present, node-type pairs otherwise.
    Auto,
    /// The relation column; an error if it is missing.
    Explicit,
    /// Dense ids of `(source type, target type)` pairs.
    Types,
    /// Dense ids of `(source label, target label)` pairs; unlabeled nodes
    /// share one extra label.
    Classes,
    /// Every edge gets relation 0.
    Uniform,
}

impl FromStr for RelationMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "auto" => Self::Auto,
            "explicit" => Self::Explicit,
            "types" => Self::Types,
            "classes" => Self::Classes,
            "uniform" => Self::Uniform,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown relation mode {other:?} (auto, explicit, types, classes, uniform)"
                )))
            }
        })
    }
}

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    /// Layer count in the `l layers = l − 1 convolutions` convention.
    pub layers: usize,
    pub hidden_dim: usize,
    /// Final width; the class count for classification when unset, 512 for clustering.
    pub output_dim: Option<usize>,
    /// 0.01 for classification and 0.001 for clustering when unset.
    pub lr: Option<f64>,
    /// 100 for classification and 300 for clustering when unset.
    pub max_epochs: Option<usize>,
    pub gamma: f64,
    /// `min(|R|, 8)` when unset.
    pub basis_count: Option<usize>,
    pub split: [f64; 3],
    pub seeds: Vec<u64>,
    /// `(1, 1)` for classification and `(1, 0)` for clustering when unset.
    pub alpha_beta_init: Option<(f64, f64)>,
    pub components: Components,
    pub relations: RelationMode,
    /// Force every edge weight to 1.
    pub unweighted: bool,
    /// Cluster count for K-means; the class count when unset.
    pub clusters: Option<usize>,
    /// K-means restarts, seeded `0..kmeans_restarts`.
    pub kmeans_restarts: u64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            layers: 4,
            hidden_dim: 64,
            output_dim: None,
            lr: None,
            max_epochs: None,
            gamma: 0.2,
            basis_count: None,
            split: [0.7, 0.2, 0.1],
            seeds: (0..10).collect(),
            alpha_beta_init: None,
            components: Components::default(),
            relations: RelationMode::Auto,
            unweighted: false,
            clusters: None,
            kmeans_restarts: 10,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr.unwrap_or(match self.task {
            Task::Classify => 0.01,
            Task::Cluster => 0.001,
        })
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs.unwrap_or(match self.task {
            Task::Classify => 100,
            Task::Cluster => 300,
        })
    }

    pub fn alpha_beta(&self) -> (f64, f64) {
        self.alpha_beta_init.unwrap_or(match self.task {
            Task::Classify => (1.0, 1.0),
            Task::Cluster => (1.0, 0.0),
        })
    }

    pub fn output_dim_for(&self, classes: usize) -> usize {
        self.output_dim.unwrap_or(match self.task {
            Task::Classify => classes,
            Task::Cluster => 512,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.layers < 2 {
            return bad(format!("layers must be at least 2, got {}", self.layers));
        }
        if self.hidden_dim == 0 || self.output_dim == Some(0) || self.basis_count == Some(0) {
            return bad("dimensions and basis count must be positive".into());
        }
        if self.max_epochs == Some(0) || self.kmeans_restarts == 0 || self.clusters == Some(0) {
            return bad("epoch, restart and cluster counts must be positive".into());
        }
        if !(self.lr() > 0.0) || !self.lr().is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.lr()));
        }
        if self.split.iter().any(|r| !(*r >= 0.0))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "split ratios {:?} must be non-negative and sum to 1",
                self.split
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
            value
                .parse()
                .map_err(|_| HarnessError::Config(format!("invalid value {value:?} for {key}")))
        }
        let optional = |v: &str| v.is_empty() || v.eq_ignore_ascii_case("auto");
        match key {
            "task" => self.task = value.parse()?,
            "layers" => self.layers = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "output_dim" => {
                self.output_dim = if optional(value) {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "lr" => {
                self.lr = if optional(value) {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "max_epochs" | "epochs" => {
                self.max_epochs = if optional(value) {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "gamma" => self.gamma = parse(key, value)?,
            "basis_count" | "bases" => {
                self.basis_count = if optional(value) {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "split" => self.split = parse_split(value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "alpha_init" => self.alpha_beta_init = Some((parse(key, value)?, self.alpha_beta().1)),
            "beta_init" => self.alpha_beta_init = Some((self.alpha_beta().0, parse(key, value)?)),
            "nodal" => self.components.nodal = parse_bool(key, value)?,
            "outgoing" => self.components.outgoing = parse_bool(key, value)?,
            "train_alpha_beta" => self.components.train_alpha_beta = parse_bool(key, value)?,
            "relations" => self.relations = value.parse()?,
            "unweighted" => self.unweighted = parse_bool(key, value)?,
            "clusters" => {
                self.clusters = if optional(value) {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "kmeans_restarts" => self.kmeans_restarts = parse(key, value)?,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown configuration key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies a configuration text: `key = value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), HarnessError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Parse {
                    file: source.to_string(),
                    line: k + 1,
                    message: "expected `key = value`".into(),
                });
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Parse {
                    file: source.to_string(),
                    line: k + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

/// `"0.7,0.2,0.1"`.
pub fn parse_split(value: &str) -> Result<[f64; 3], HarnessError> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| HarnessError::Config(format!("invalid split {value:?}")))?;
    <[f64; 3]>::try_from(parts)
        .map_err(|_| HarnessError::Config(format!("split {value:?} needs three ratios")))
}

/// A comma list of seeds or ranges: `"3"`, `"0..10"`, `"1,4,7..9"`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>, HarnessError> {
    let err = || HarnessError::Config(format!("invalid seed list {value:?}"));
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (
                a.trim().parse().map_err(|_| err())?,
                b.trim().parse().map_err(|_| err())?,
            );
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| err())?);
        }
    }
    if out.is_empty() {
        return Err(err());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_dependent_defaults() {
        let c = TrainConfig::new(Task::Classify);
        assert_eq!(
            (c.lr(), c.max_epochs(), c.alpha_beta()),
            (0.01, 100, (1.0, 1.0))
        );
        assert_eq!(c.output_dim_for(7), 7);
        let k = TrainConfig::new(Task::Cluster);
        assert_eq!(
            (k.lr(), k.max_epochs(), k.alpha_beta()),
            (0.001, 300, (1.0, 0.0))
        );
        assert_eq!(k.output_dim_for(7), 512);
        assert_eq!(c.seeds.len(), 10);
        c.validate().unwrap();
    }

    #[test]
    fn parses_config_text() {
        let mut c = TrainConfig::new(Task::Classify);
        c.apply_text("# comment\nlayers = 3\ngamma=0.5 # inline\nseeds = 1,4..6\nsplit = 0.6, 0.2, 0.2\nnodal = false\n", "cfg")
            .unwrap();
        assert_eq!(c.layers, 3);
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.seeds, vec![1, 4, 5]);
        assert_eq!(c.split, [0.6, 0.2, 0.2]);
        assert!(!c.components.nodal);
    }

    #[test]
    fn reports_bad_lines() {
        let mut c = TrainConfig::new(Task::Classify);
        let err = c.apply_text("layers = 3\nbogus\n", "cfg").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }), "{err}");
        assert!(c.apply_text("colour = red", "cfg").is_err());
        c.gamma = 2.0;
        assert!(c.validate().is_err());
    }
}
