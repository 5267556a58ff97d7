//! The supervised and contrastive training loops, and checkpoint evaluation.

use serde::{Deserialize, Serialize};

use super::{split_nodes, HarnessError, Split, TrainConfig, MIN_LABELED};
use crate::cluster::{kmeans_best, ClusterAssignment};
use crate::graph::HetGraph;
use crate::metrics::{accuracy, MetricReport};
use crate::model::{
    embed, model_forward, output, Checkpoint, ModelInput, ModelParams, ModelSpec, Task,
};
use crate::objectives::{mi_loss, mi_loss_value, nll_loss};
use crate::tensor::{Adam, AdamConfig, Matrix, Tape};

/// One row of the per-epoch history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// NLL for classification, `−mi_loss` for clustering.
    pub loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub mi: Option<f64>,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,loss,train_accuracy,val_accuracy,mi";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.loss,
            opt(self.train_accuracy),
            opt(self.val_accuracy),
            opt(self.mi)
        )
    }
}

/// Result of [`train_classify`].
#[derive(Clone, Debug)]
pub struct ClassifyOutcome {
    /// Parameters of the best-validation epoch.
    pub params: ModelParams,
    pub split: Split,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Test metrics of the best-validation parameters; empty when the test split is.
    pub test: MetricReport,
}

/// Result of [`train_cluster`].
#[derive(Clone, Debug)]
pub struct ClusterOutcome {
    pub params: ModelParams,
    /// Final embeddings of every node.
    pub embeddings: Matrix,
    pub assignment: ClusterAssignment,
    /// Metrics over labeled nodes.
    pub metrics: MetricReport,
    pub history: Vec<EpochRecord>,
    /// `mi_loss` of the initialized model.
    pub initial_mi: f64,
    /// `mi_loss` of the trained model against a fresh corruption.
    pub final_mi: f64,
}

/// One run as reported in JSON and CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: Task,
    pub dataset: String,
    pub seed: u64,
    pub gamma: f64,
    pub layers: usize,
    pub metrics: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn csv_header() -> String {
        let mut cols = vec!["task", "dataset", "seed", "gamma", "layers"];
        cols.extend(MetricReport::COLUMNS);
        cols.push("error");
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut fields = vec![
            self.task.to_string(),
            csv_field(&self.dataset),
            self.seed.to_string(),
            self.gamma.to_string(),
            self.layers.to_string(),
        ];
        fields.extend(
            self.metrics
                .values()
                .iter()
                .map(|v| v.map_or_else(String::new, |x| x.to_string())),
        );
        fields.push(self.error.as_deref().map(csv_field).unwrap_or_default());
        fields.join(",")
    }
}

/// Quotes a CSV field when it needs it.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Model shape for `graph` under `cfg`.
pub fn model_spec(cfg: &TrainConfig, graph: &HetGraph) -> Result<ModelSpec, HarnessError> {
    cfg.validate()?;
    let classes = graph.num_classes();
    if cfg.task == Task::Classify && cfg.output_dim.is_none() && classes < 2 {
        return Err(HarnessError::Invalid(format!(
            "classification needs at least 2 classes, found {classes}"
        )));
    }
    let relations = graph.num_relations();
    let spec = ModelSpec {
        task: cfg.task,
        dims: ModelSpec::dims_for(
            cfg.layers,
            graph.feature_dim(),
            cfg.hidden_dim,
            cfg.output_dim_for(classes),
        )?,
        num_relations: relations,
        num_bases: cfg.basis_count.unwrap_or(relations.min(8)),
        gamma: cfg.gamma,
        components: cfg.components,
        alpha_beta_init: cfg.alpha_beta(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Converts an error and stamps divergences with `epoch`.
fn at_epoch<T, E: Into<HarnessError>>(r: Result<T, E>, epoch: usize) -> Result<T, HarnessError> {
    r.map_err(|e| match e.into() {
        HarnessError::Divergence { reason, .. } => HarnessError::Divergence { epoch, reason },
        other => other,
    })
}

fn labels_at(graph: &HetGraph, idx: &[usize]) -> Vec<usize> {
    idx.iter()
        .map(|&i| graph.labels()[i].expect("split nodes are labeled"))
        .collect()
}

fn accuracy_at(
    pred: &[usize],
    graph: &HetGraph,
    idx: &[usize],
) -> Result<Option<f64>, HarnessError> {
    if idx.is_empty() {
        return Ok(None);
    }
    let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
    Ok(Some(accuracy(&p, &labels_at(graph, idx))?))
}

/// One Adam step; returns an error if the update produced non-finite values.
fn apply_step(
    adam: &mut Adam,
    params: &mut ModelParams,
    grads: &[Option<Matrix>],
    epoch: usize,
) -> Result<(), HarnessError> {
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(HarnessError::Divergence {
            epoch,
            reason: "non-finite gradient".into(),
        });
    }
    let refs: Vec<Option<&Matrix>> = grads.iter().map(Option::as_ref).collect();
    adam.step(&mut params.matrices_mut(), &refs);
    if params.named().iter().any(|(_, m)| !m.is_finite()) {
        return Err(HarnessError::Divergence {
            epoch,
            reason: "non-finite parameter after update".into(),
        });
    }
    Ok(())
}

/// Supervised training on a split drawn from `seed`. Graphs with fewer than
/// [`MIN_LABELED`] labeled nodes train on all of them, without validation or
/// test metrics.
pub fn train_classify(
    graph: &HetGraph,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ClassifyOutcome, HarnessError> {
    let split = split_for(graph, cfg, seed)?;
    train_classify_with_split(graph, cfg, seed, split)
}

fn split_for(graph: &HetGraph, cfg: &TrainConfig, seed: u64) -> Result<Split, HarnessError> {
    let labeled = graph.labeled_nodes();
    if labeled.is_empty() {
        return Err(HarnessError::Invalid(
            "classification needs labeled nodes".into(),
        ));
    }
    if labeled.len() < MIN_LABELED {
        log::warn!(
            "only {} labeled nodes, training on all of them with no held-out split",
            labeled.len()
        );
        return Ok(Split {
            train: labeled,
            val: Vec::new(),
            test: Vec::new(),
        });
    }
    split_nodes(graph, cfg.split, seed)
}

/// Supervised training on a given split. Test labels are read only after
/// training, for the final metrics.
pub fn train_classify_with_split(
    graph: &HetGraph,
    cfg: &TrainConfig,
    seed: u64,
    split: Split,
) -> Result<ClassifyOutcome, HarnessError> {
    if cfg.task != Task::Classify {
        return Err(HarnessError::Config(
            "train_classify needs task = classify".into(),
        ));
    }
    if let Some(&i) = split
        .train
        .iter()
        .chain(&split.val)
        .find(|&&i| graph.labels().get(i).is_none_or(Option::is_none))
    {
        return Err(HarnessError::Invalid(format!(
            "node {i} is in the training or validation split but has no label"
        )));
    }
    if split.train.is_empty() {
        return Err(HarnessError::Invalid("the training split is empty".into()));
    }
    let spec = model_spec(cfg, graph)?;
    let input = ModelInput::new(graph);
    let mut params = ModelParams::init(spec, seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr()), &params.shapes());
    let train_labels = labels_at(graph, &split.train);
    let mut history = Vec::with_capacity(cfg.max_epochs());
    let mut best: Option<(f64, usize, ModelParams, Matrix)> = None;

    for epoch in 1..=cfg.max_epochs() {
        let tape = Tape::new();
        let leaves = params.register(&tape);
        let z = at_epoch(output(&params, &leaves, &tape, &input), epoch)?;
        let loss = at_epoch(nll_loss(z, &split.train, &train_labels), epoch)?;
        let loss_value = loss.value().item();
        let z_value = z.value().as_ref().clone();
        let pred = z_value.argmax_rows();
        let train_accuracy = accuracy_at(&pred, graph, &split.train)?;
        let val_accuracy = accuracy_at(&pred, graph, &split.val)?;
        log::debug!("epoch {epoch}: loss {loss_value:.6} val {val_accuracy:?}");
        history.push(EpochRecord {
            epoch,
            loss: loss_value,
            train_accuracy,
            val_accuracy,
            mi: None,
        });

        // Snapshot the parameters that produced this epoch's predictions.
        let score = val_accuracy.or(train_accuracy).unwrap_or(0.0);
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, epoch, params.clone(), z_value));
        }

        at_epoch(tape.backward(loss), epoch)?;
        let grads = leaves.grads();
        drop(leaves);
        apply_step(&mut adam, &mut params, &grads, epoch)?;
    }

    let (_, best_epoch, best_params, best_z) = best.expect("at least one epoch");
    let test = test_metrics(&best_z, graph, &split.test)?;
    Ok(ClassifyOutcome {
        params: best_params,
        split,
        history,
        best_epoch,
        test,
    })
}

/// Classification metrics over the labeled nodes of `test`.
fn test_metrics(
    z: &Matrix,
    graph: &HetGraph,
    test: &[usize],
) -> Result<MetricReport, HarnessError> {
    let idx: Vec<usize> = test
        .iter()
        .copied()
        .filter(|&i| graph.labels()[i].is_some())
        .collect();
    if idx.is_empty() {
        log::warn!("no labeled test nodes, no test metrics");
        return Ok(MetricReport::default());
    }
    let pred = z.argmax_rows();
    let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
    Ok(MetricReport::classification(&p, &labels_at(graph, &idx))?)
}

/// Labeled node indices and their labels.
fn labeled(graph: &HetGraph) -> (Vec<usize>, Vec<usize>) {
    let idx = graph.labeled_nodes();
    let labels = labels_at(graph, &idx);
    (idx, labels)
}

fn cluster_count(cfg: &TrainConfig, graph: &HetGraph) -> Result<usize, HarnessError> {
    match cfg.clusters {
        Some(k) => Ok(k),
        None if graph.num_classes() > 0 => Ok(graph.num_classes()),
        None => Err(HarnessError::Config(
            "no labels to infer the cluster count from; set clusters".into(),
        )),
    }
}

/// K-means on `points` plus metrics over the labeled nodes.
fn cluster_and_score(
    points: &Matrix,
    graph: &HetGraph,
    cfg: &TrainConfig,
) -> Result<(ClusterAssignment, MetricReport), HarnessError> {
    let k = cluster_count(cfg, graph)?;
    let assignment = kmeans_best(points, k, 0..cfg.kmeans_restarts)?;
    let (idx, truth) = labeled(graph);
    let metrics = if idx.is_empty() {
        MetricReport::default()
    } else {
        let pred: Vec<usize> = idx.iter().map(|&i| assignment.labels[i]).collect();
        MetricReport::clustering(&points.select_rows(&idx), &pred, &truth)?
    };
    Ok((assignment, metrics))
}

/// Contrastive training with a corruption redrawn from `seed + epoch` every
/// epoch, then K-means on the final embeddings.
pub fn train_cluster(
    graph: &HetGraph,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ClusterOutcome, HarnessError> {
    if cfg.task != Task::Cluster {
        return Err(HarnessError::Config(
            "train_cluster needs task = cluster".into(),
        ));
    }
    let spec = model_spec(cfg, graph)?;
    let input = ModelInput::new(graph);
    let mut params = ModelParams::init(spec, seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr()), &params.shapes());
    let mut history = Vec::with_capacity(cfg.max_epochs());

    for epoch in 1..=cfg.max_epochs() {
        let fake_input = ModelInput::new(&graph.corrupt(seed.wrapping_add(epoch as u64)));
        let tape = Tape::new();
        let leaves = params.register(&tape);
        let real = at_epoch(embed(&params, &leaves, &tape, &input), epoch)?;
        let fake = at_epoch(embed(&params, &leaves, &tape, &fake_input), epoch)?;
        let m = leaves
            .discriminator
            .expect("clustering models carry a discriminator");
        let mi = at_epoch(mi_loss(real, fake, m), epoch)?;
        let mi_value = mi.value().item();
        log::debug!("epoch {epoch}: mi {mi_value:.6}");
        history.push(EpochRecord {
            epoch,
            loss: -mi_value,
            train_accuracy: None,
            val_accuracy: None,
            mi: Some(mi_value),
        });
        let loss = at_epoch(mi.scale(-1.0), epoch)?;
        at_epoch(tape.backward(loss), epoch)?;
        let grads = leaves.grads();
        drop(leaves);
        apply_step(&mut adam, &mut params, &grads, epoch)?;
    }

    let epochs = cfg.max_epochs();
    let embeddings = at_epoch(model_forward(&params, &input), epochs)?;
    let fake = at_epoch(
        model_forward(
            &params,
            &ModelInput::new(&graph.corrupt(seed.wrapping_add(epochs as u64 + 1))),
        ),
        epochs,
    )?;
    let m = params
        .discriminator
        .as_ref()
        .expect("clustering models carry a discriminator");
    let final_mi = at_epoch(mi_loss_value(&embeddings, &fake, m), epochs)?;
    let initial_mi = history.first().and_then(|r| r.mi).unwrap_or(final_mi);
    let (assignment, metrics) = cluster_and_score(&embeddings, graph, cfg)?;
    Ok(ClusterOutcome {
        params,
        embeddings,
        assignment,
        metrics,
        history,
        initial_mi,
        final_mi,
    })
}

/// K-means on the raw node features, the untrained baseline.
pub fn kmeans_raw(
    graph: &HetGraph,
    cfg: &TrainConfig,
) -> Result<(ClusterAssignment, MetricReport), HarnessError> {
    cluster_and_score(graph.features(), graph, cfg)
}

/// Configuration stored inside a checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredConfig {
    pub train: TrainConfig,
    pub seed: u64,
    pub dataset: String,
}

impl StoredConfig {
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HarnessError> {
        serde_json::from_value(ck.config.clone()).map_err(|e| {
            HarnessError::Config(format!("checkpoint configuration is unreadable: {e}"))
        })
    }
}

/// Model outputs for `graph` and metrics recomputed from a checkpoint: test
/// metrics of the stored split for classification, K-means metrics for
/// clustering.
pub fn evaluate_checkpoint(
    graph: &HetGraph,
    checkpoint: &Checkpoint,
) -> Result<(Matrix, MetricReport), HarnessError> {
    let stored = StoredConfig::from_checkpoint(checkpoint)?;
    let params = &checkpoint.params;
    let dims = &params.spec.dims;
    if dims[0] != graph.feature_dim() {
        return Err(HarnessError::Invalid(format!(
            "checkpoint expects {} features, the dataset has {}",
            dims[0],
            graph.feature_dim()
        )));
    }
    let out = model_forward(params, &ModelInput::new(graph))?;
    let metrics = match params.spec.task {
        Task::Classify => {
            let split = split_for(graph, &stored.train, stored.seed)?;
            test_metrics(&out, graph, &split.test)?
        }
        Task::Cluster => cluster_and_score(&out, graph, &stored.train)?.1,
    };
    Ok((out, metrics))
}
