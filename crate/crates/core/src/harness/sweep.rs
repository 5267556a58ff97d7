//! Grids over teleport probability, depth and message components.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::train::csv_field;
use super::{train_classify, train_cluster, HarnessError, RunRecord, TrainConfig};
use crate::graph::HetGraph;
use crate::metrics::MetricReport;
use crate::model::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Gamma,
    Layers,
    Ablation,
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(Self::Gamma),
            "layers" => Ok(Self::Layers),
            "ablation" => Ok(Self::Ablation),
            other => Err(HarnessError::Config(format!(
                "unknown sweep axis {other:?} (gamma, layers, ablation)"
            ))),
        }
    }
}

/// Teleport grid `0, 0.1, …, 1`.
pub const GAMMA_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Layer grid `2..=8`.
pub const LAYER_GRID: std::ops::RangeInclusive<usize> = 2..=8;

/// The five message-component variants, derived from `base`.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut no_nodal = base.clone();
    no_nodal.components.nodal = false;
    let mut no_outgoing = base.clone();
    no_outgoing.components.outgoing = false;
    let mut unweighted = base.clone();
    unweighted.alpha_beta_init = Some((1.0, 1.0));
    unweighted.components.train_alpha_beta = false;
    let mut bhgnn = base.clone();
    bhgnn.gamma = 0.0;
    vec![
        ("no_nodal".into(), no_nodal),
        ("no_outgoing".into(), no_outgoing),
        ("unweighted_in_out".into(), unweighted),
        ("bhgnn".into(), bhgnn),
        ("bhgnn_rt".into(), base.clone()),
    ]
}

/// Grid points of `axis`, each with its configuration.
pub fn grid(base: &TrainConfig, axis: SweepAxis) -> Vec<(String, TrainConfig)> {
    match axis {
        SweepAxis::Gamma => GAMMA_GRID
            .iter()
            .map(|&g| {
                let mut c = base.clone();
                c.gamma = g;
                (format!("{g}"), c)
            })
            .collect(),
        SweepAxis::Layers => LAYER_GRID
            .map(|l| {
                let mut c = base.clone();
                c.layers = l;
                (l.to_string(), c)
            })
            .collect(),
        SweepAxis::Ablation => ablation_variants(base),
    }
}

/// One run on the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    /// Grid value or variant name.
    pub point: String,
    pub record: RunRecord,
}

/// Trains one configuration and seed, folding any failure into the record.
pub fn run_once(graph: &HetGraph, cfg: &TrainConfig, seed: u64, dataset: &str) -> RunRecord {
    let result = match cfg.task {
        Task::Classify => train_classify(graph, cfg, seed).map(|o| o.test),
        Task::Cluster => train_cluster(graph, cfg, seed).map(|o| o.metrics),
    };
    let (metrics, error) = match result {
        Ok(m) => (m, None),
        Err(e) => {
            log::warn!("{dataset}: seed {seed} failed: {e}");
            (MetricReport::default(), Some(e.to_string()))
        }
    };
    RunRecord {
        task: cfg.task,
        dataset: dataset.to_string(),
        seed,
        gamma: cfg.gamma,
        layers: cfg.layers,
        metrics,
        error,
    }
}

/// Runs every grid point for every seed of `base`, spread over up to
/// `workers` threads. Rows come back in grid-then-seed order.
pub fn sweep(
    graph: &HetGraph,
    base: &TrainConfig,
    axis: SweepAxis,
    dataset: &str,
    workers: usize,
) -> Vec<SweepRow> {
    let jobs: Vec<(String, TrainConfig, u64)> = grid(base, axis)
        .into_iter()
        .flat_map(|(point, cfg)| {
            base.seeds
                .iter()
                .map(move |&s| (point.clone(), cfg.clone(), s))
        })
        .collect();
    let slots: Vec<Mutex<Option<RunRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((point, cfg, seed)) = jobs.get(k) else {
                    break;
                };
                log::info!("{axis:?} = {point}, seed {seed}");
                let record = run_once(graph, cfg, *seed, dataset);
                *slots[k].lock().expect("slot lock") = Some(record);
            });
        }
    });
    jobs.into_iter()
        .zip(slots)
        .map(|((point, _, _), slot)| SweepRow {
            axis,
            point,
            record: slot
                .into_inner()
                .expect("slot lock")
                .expect("every job ran"),
        })
        .collect()
}

/// Mean and population standard deviation of each metric at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub point: String,
    pub runs: usize,
    pub failed: usize,
    /// Per metric of [`MetricReport::COLUMNS`]; `None` when no run reported it.
    pub stats: Vec<Option<(f64, f64)>>,
}

/// Groups rows by point, in first-appearance order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut points: Vec<&str> = Vec::new();
    for r in rows {
        if !points.contains(&r.point.as_str()) {
            points.push(&r.point);
        }
    }
    points
        .into_iter()
        .map(|point| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.point == point).collect();
            let stats = (0..MetricReport::COLUMNS.len())
                .map(|m| {
                    let vals: Vec<f64> = group
                        .iter()
                        .filter_map(|r| r.record.metrics.values()[m])
                        .collect();
                    if vals.is_empty() {
                        return None;
                    }
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    Some((mean, var.sqrt()))
                })
                .collect();
            AggregateRow {
                point: point.to_string(),
                runs: group.len(),
                failed: group.iter().filter(|r| r.record.error.is_some()).count(),
                stats,
            }
        })
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?,
    ))
}

/// One line per run: `axis,point,` followed by [`RunRecord::csv_header`].
pub fn write_runs_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    let io = |e| HarnessError::io(path, e);
    writeln!(w, "axis,point,{}", RunRecord::csv_header()).map_err(io)?;
    for r in rows {
        let axis = serde_json::to_value(r.axis)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        writeln!(w, "{axis},{},{}", csv_field(&r.point), r.record.csv_row()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One line per grid point with `<metric>_mean` and `<metric>_std` columns.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    let io = |e| HarnessError::io(path, e);
    let mut header = vec!["point".to_string(), "runs".into(), "failed".into()];
    for m in MetricReport::COLUMNS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        let mut fields = vec![
            csv_field(&r.point),
            r.runs.to_string(),
            r.failed.to_string(),
        ];
        for s in &r.stats {
            match s {
                Some((mean, std)) => {
                    fields.push(mean.to_string());
                    fields.push(std.to_string());
                }
                None => fields.extend([String::new(), String::new()]),
            }
        }
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_the_documented_cardinality() {
        let base = TrainConfig::new(Task::Classify);
        assert_eq!(grid(&base, SweepAxis::Gamma).len(), 11);
        assert_eq!(grid(&base, SweepAxis::Layers).len(), 7);
        let variants = ablation_variants(&base);
        assert_eq!(variants.len(), 5);
        let unweighted = &variants[2].1;
        assert_eq!(unweighted.alpha_beta(), (1.0, 1.0));
        assert!(!unweighted.components.train_alpha_beta);
        assert_eq!(variants[3].1.gamma, 0.0);
        assert_eq!(variants[4].1, base);
    }

    #[test]
    fn aggregate_uses_population_std_and_skips_failures() {
        let record = |acc: Option<f64>, error: Option<&str>| RunRecord {
            task: Task::Classify,
            dataset: "d".into(),
            seed: 0,
            gamma: 0.2,
            layers: 4,
            metrics: MetricReport {
                accuracy: acc,
                ..MetricReport::default()
            },
            error: error.map(str::to_string),
        };
        let rows: Vec<SweepRow> = [(Some(0.5), None), (Some(1.0), None), (None, Some("boom"))]
            .into_iter()
            .map(|(a, e)| SweepRow {
                axis: SweepAxis::Gamma,
                point: "0.2".into(),
                record: record(a, e),
            })
            .collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!((agg[0].runs, agg[0].failed), (3, 1));
        assert_eq!(agg[0].stats[0], Some((0.75, 0.25)));
        assert_eq!(agg[0].stats[1], None);
    }
}
