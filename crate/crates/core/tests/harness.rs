mod common;

use bhgnn::harness::{
    aggregate, evaluate_checkpoint, export_embeddings, load_dataset, read_embeddings, run_once,
    split_nodes, sweep, train_classify, train_classify_with_split, train_cluster,
    write_aggregate_csv, write_runs_csv, LoadOptions, RelationMode, StoredConfig, SweepAxis,
    TrainConfig,
};
use bhgnn::metrics::silhouette;
use bhgnn::model::{load_checkpoint, save_checkpoint, Task};
use common::{fixture, fixture_dir};

fn classify_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::new(Task::Classify);
    cfg.hidden_dim = 16;
    cfg
}

fn cluster_cfg(epochs: usize, lr: f64) -> TrainConfig {
    let mut cfg = TrainConfig::new(Task::Cluster);
    cfg.hidden_dim = 16;
    cfg.output_dim = Some(32);
    cfg.max_epochs = Some(epochs);
    cfg.lr = Some(lr);
    cfg
}

#[test]
fn toy_fixture_matches_its_readme() {
    let d = load_dataset(&fixture_dir("toy6"), LoadOptions::default()).unwrap();
    assert!(d.has_relation_column);
    let s = &d.summary;
    assert_eq!(
        (
            s.nodes,
            s.edges,
            s.relations,
            s.node_types,
            s.features,
            s.classes
        ),
        (6, 7, 2, 2, 3, 2)
    );
    assert!(d.graph.is_weighted());
    let b = load_dataset(&fixture_dir("two_blobs"), LoadOptions::default()).unwrap();
    assert_eq!(
        (
            b.summary.nodes,
            b.summary.edges,
            b.summary.relations,
            b.summary.classes
        ),
        (20, 180, 1, 2)
    );
    assert!(s.to_string().contains("toy6"));
}

#[test]
fn toy_classification_fits_training_set() {
    let g = fixture("toy6");
    let out = train_classify(&g, &classify_cfg(), 0).unwrap();
    let best = out
        .history
        .iter()
        .filter_map(|r| r.train_accuracy)
        .fold(0.0, f64::max);
    assert_eq!(best, 1.0);
    assert_eq!(out.history.len(), 100);
}

#[test]
fn classification_is_bit_deterministic() {
    let g = fixture("two_blobs");
    let cfg = classify_cfg();
    let a = train_classify(&g, &cfg, 3).unwrap();
    let b = train_classify(&g, &cfg, 3).unwrap();
    let bits =
        |h: &[bhgnn::harness::EpochRecord]| h.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
    assert_eq!(
        serde_json::to_string(&a.test).unwrap(),
        serde_json::to_string(&b.test).unwrap()
    );
}

#[test]
fn full_teleport_pins_accuracy_at_the_majority_rate() {
    let g = fixture("toy6");
    let mut cfg = classify_cfg();
    cfg.gamma = 1.0;
    cfg.max_epochs = Some(20);
    let out = train_classify(&g, &cfg, 0).unwrap();
    for r in &out.history {
        assert_eq!(r.train_accuracy, Some(0.5));
    }
}

#[test]
fn test_labels_do_not_influence_training() {
    let g = fixture("two_blobs");
    let cfg = classify_cfg();
    let split = split_nodes(&g, cfg.split, 1).unwrap();
    let a = train_classify_with_split(&g, &cfg, 1, split.clone()).unwrap();
    let masked = g.without_labels(&split.test);
    let mut masked_cfg = cfg.clone();
    masked_cfg.output_dim = Some(g.num_classes());
    let b = train_classify_with_split(&masked, &masked_cfg, 1, split).unwrap();
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
}

#[test]
fn blob_clustering_recovers_the_blobs() {
    let g = fixture("two_blobs");
    for seed in 0..3 {
        let out = train_cluster(&g, &cluster_cfg(100, 0.001), seed).unwrap();
        assert_eq!(out.metrics.nmi, Some(1.0), "seed {seed}");
        assert_eq!(out.metrics.accuracy_hungarian, Some(1.0));
        assert!(
            (out.initial_mi + 2.0 * std::f64::consts::LN_2).abs() < 0.2,
            "initial {}",
            out.initial_mi
        );
        assert!(out.final_mi > out.initial_mi);
    }
    let a = train_cluster(&g, &cluster_cfg(30, 0.001), 7).unwrap();
    let b = train_cluster(&g, &cluster_cfg(30, 0.001), 7).unwrap();
    assert_eq!(
        serde_json::to_string(&a.metrics).unwrap(),
        serde_json::to_string(&b.metrics).unwrap()
    );
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
}

#[test]
fn contrastive_training_approaches_the_objective_bound() {
    let g = fixture("two_blobs");
    let out = train_cluster(&g, &cluster_cfg(100, 0.01), 0).unwrap();
    assert!(out.final_mi >= -0.2, "final {}", out.final_mi);
    assert!(out.history.iter().all(|r| r.mi.unwrap() <= 0.0));
}

#[test]
fn checkpoint_evaluation_reproduces_training_metrics() {
    let g = fixture("two_blobs");
    let cfg = classify_cfg();
    let out = train_classify(&g, &cfg, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ck");
    let stored = StoredConfig {
        train: cfg,
        seed: 2,
        dataset: "two_blobs".into(),
    };
    save_checkpoint(&path, &out.params, &stored.to_value()).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    let (_, metrics) = evaluate_checkpoint(&g, &ck).unwrap();
    assert_eq!(metrics, out.test);
}

#[test]
fn export_round_trips_and_preserves_silhouette() {
    let g = fixture("toy6");
    let out = train_classify(&g, &classify_cfg(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.csv");
    let z = export_embeddings(&out.params, &g, &path).unwrap();
    assert_eq!(z.shape(), (6, 2));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 4);
    let (labels, back) = read_embeddings(&path).unwrap();
    assert!(z.max_abs_diff(&back) <= 1e-15);
    let truth: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
    assert_eq!(
        silhouette(&z, &truth).unwrap(),
        silhouette(&back, &truth).unwrap()
    );
}

#[test]
fn sweeps_have_grid_cardinality_and_consistent_aggregates() {
    let g = fixture("two_blobs");
    let mut cfg = classify_cfg();
    cfg.max_epochs = Some(10);
    cfg.seeds = vec![0, 1];
    let rows = sweep(&g, &cfg, SweepAxis::Ablation, "two_blobs", 4);
    assert_eq!(rows.len(), 5 * 2);
    let gamma_rows = sweep(&g, &cfg, SweepAxis::Gamma, "two_blobs", 4);
    assert_eq!(aggregate(&gamma_rows).len(), 11);

    // γ = 0 rows equal a direct run without teleport.
    let mut direct = cfg.clone();
    direct.gamma = 0.0;
    for row in gamma_rows.iter().filter(|r| r.point == "0") {
        assert_eq!(
            row.record.metrics,
            run_once(&g, &direct, row.record.seed, "two_blobs").metrics
        );
    }

    let agg = aggregate(&rows);
    for a in &agg {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.point == a.point)
            .filter_map(|r| r.record.metrics.accuracy)
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = (accs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt();
        let (m, s) = a.stats[0].unwrap();
        assert!((m - mean).abs() < 1e-15 && (s - std).abs() < 1e-15);
    }
    let dir = tempfile::tempdir().unwrap();
    write_runs_csv(&dir.path().join("runs.csv"), &rows).unwrap();
    write_aggregate_csv(&dir.path().join("agg.csv"), &agg).unwrap();
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 11);
    assert!(runs.starts_with("axis,point,task,dataset,seed,gamma,layers,"));
}

#[test]
fn failed_runs_are_recorded_not_fatal() {
    let g = fixture("two_blobs");
    let mut cfg = classify_cfg();
    cfg.max_epochs = Some(3);
    cfg.seeds = vec![0];
    cfg.lr = Some(1e300);
    let rows = sweep(&g, &cfg, SweepAxis::Layers, "two_blobs", 2);
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.record.error.is_some()), "{rows:?}");
}

#[test]
fn relation_modes_change_relation_counts() {
    let count = |name: &str, relations| {
        load_dataset(
            &fixture_dir(name),
            LoadOptions {
                relations,
                unweighted: false,
            },
        )
        .map(|d| d.summary.relations)
    };
    assert_eq!(count("toy6", RelationMode::Explicit).unwrap(), 2);
    assert_eq!(count("toy6", RelationMode::Types).unwrap(), 4);
    assert_eq!(count("toy6", RelationMode::Uniform).unwrap(), 1);
    assert_eq!(count("two_blobs", RelationMode::Classes).unwrap(), 2);
    assert!(count("two_blobs", RelationMode::Explicit).is_err());
}
