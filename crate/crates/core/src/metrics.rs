//! Classification and clustering metrics.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("metric over an empty labelling")]
    Empty,
    #[error("silhouette needs 2 ≤ clusters ≤ n − 1, got {clusters} clusters for {n} points")]
    SilhouetteLabels { clusters: usize, n: usize },
}

/// Metric values of one run; absent entries were not computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_hungarian: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
}

impl MetricReport {
    /// Column names of [`MetricReport::values`].
    pub const COLUMNS: [&'static str; 6] = [
        "accuracy",
        "macro_f1",
        "accuracy_hungarian",
        "nmi",
        "ari",
        "silhouette",
    ];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.accuracy,
            self.macro_f1,
            self.accuracy_hungarian,
            self.nmi,
            self.ari,
            self.silhouette,
        ]
    }

    /// Classification metrics of `pred` against `truth`.
    pub fn classification(pred: &[usize], truth: &[usize]) -> Result<Self, MetricError> {
        Ok(Self {
            accuracy: Some(accuracy(pred, truth)?),
            macro_f1: Some(macro_f1(pred, truth)?),
            ..Self::default()
        })
    }

    /// Clustering metrics; silhouette is skipped when it is undefined.
    pub fn clustering(
        points: &Matrix,
        pred: &[usize],
        truth: &[usize],
    ) -> Result<Self, MetricError> {
        Ok(Self {
            accuracy_hungarian: Some(cluster_accuracy(pred, truth)?),
            nmi: Some(nmi(pred, truth)?),
            ari: Some(ari(pred, truth)?),
            silhouette: silhouette(points, pred).ok(),
            ..Self::default()
        })
    }
}

fn check(pred: &[usize], truth: &[usize]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64)
}

/// Unweighted mean of per-class F1 over every label seen in either vector.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            counts.entry(p).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(t).or_default().2 += 1;
        }
    }
    let total: f64 = counts
        .values()
        .map(|&(tp, fp, fn_)| {
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / counts.len() as f64)
}

/// Dense contingency table with compacted label ids: `table[a][b]`.
fn contingency(a: &[usize], b: &[usize]) -> Vec<Vec<usize>> {
    let compact = |v: &[usize]| {
        let mut ids: Vec<usize> = v.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let map: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        (v.iter().map(|x| map[x]).collect::<Vec<_>>(), ids.len())
    };
    let (ca, na) = compact(a);
    let (cb, nb) = compact(b);
    let mut table = vec![vec![0usize; nb]; na];
    for (&x, &y) in ca.iter().zip(&cb) {
        table[x][y] += 1;
    }
    table
}

/// Accuracy under the best one-to-one mapping of clusters to classes.
pub fn cluster_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let table = contingency(pred, truth);
    let size = table.len().max(table[0].len());
    let mut weights = pathfinding::matrix::Matrix::new(size, size, 0i64);
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            weights[(i, j)] = c as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| c as f64 / n)
        .map(|p| -p * p.ln())
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let table = contingency(pred, truth);
    let (ka, kb) = (table.len(), table[0].len());
    if ka == 1 && kb == 1 {
        return Ok(1.0);
    }
    let n = pred.len() as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let norm = 0.5 * (entropy(rows.into_iter(), n) + entropy(cols.into_iter(), n));
    Ok((mi.max(0.0) / norm.max(f64::EPSILON)).min(1.0))
}

fn pairs(c: usize) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let table = contingency(pred, truth);
    let kb = table[0].len();
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = pairs(pred.len());
    let expected = if total > 0.0 {
        sum_a * sum_b / total
    } else {
        0.0
    };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean silhouette with Euclidean distances. Points alone in their cluster
/// score 0.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Result<f64, MetricError> {
    let n = points.rows();
    if labels.len() != n {
        return Err(MetricError::LengthMismatch(labels.len(), n));
    }
    let table = contingency(labels, labels);
    let k = table.len();
    if k < 2 || k > n.saturating_sub(1) {
        return Err(MetricError::SilhouetteLabels { clusters: k, n });
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let compact: Vec<usize> = labels
        .iter()
        .map(|l| ids.binary_search(l).expect("present"))
        .collect();
    let sizes: Vec<usize> = (0..k).map(|c| table[c][c]).collect();

    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let xi = points.row(i);
        for j in 0..n {
            if j != i {
                let d: f64 = xi
                    .iter()
                    .zip(points.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[compact[j]] += d;
            }
        }
        let own = compact[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions_score_one() {
        let y = vec![0, 0, 1, 2, 2, 1];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(macro_f1(&y, &y).unwrap(), 1.0);
        assert!((nmi(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ari(&y, &y).unwrap(), 1.0);
        assert_eq!(cluster_accuracy(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn all_one_class_macro_f1() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert!((macro_f1(&pred, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hungarian_is_label_invariant() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![2, 2, 0, 0, 1, 0];
        assert!((cluster_accuracy(&pred, &truth).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        // More clusters than classes.
        let pred = vec![3, 3, 1, 1, 4, 0];
        assert!((cluster_accuracy(&pred, &truth).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn separated_blobs_silhouette() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 0.1],
            vec![5.0, 5.0],
            vec![5.0, 5.1],
        ]);
        assert!(silhouette(&x, &[0, 0, 1, 1]).unwrap() > 0.9);
        assert!(silhouette(&x, &[0, 0, 0, 0]).is_err());
        assert!(silhouette(&x, &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn single_cluster_edge_cases() {
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn report_serializes_present_fields_only() {
        let r = MetricReport::classification(&[0, 1], &[0, 0]).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("accuracy") && !json.contains("nmi"));
    }
}
