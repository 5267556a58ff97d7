//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use bhgnn::graph::HetGraph;
use bhgnn::harness::{load_dataset, LoadOptions};
use bhgnn::model::{ModelParams, Task};
use bhgnn::tensor::Matrix;

/// `<workspace>/data/<name>`.
pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn fixture(name: &str) -> HetGraph {
    load_dataset(&fixture_dir(name), LoadOptions::default())
        .expect("fixture loads")
        .graph
}

/// Relation weight `W_r = Σ_b a_rb V_b`.
fn relation_weight(params: &ModelParams, layer: usize, r: usize) -> Matrix {
    params.layers[layer].relation_weight(r)
}

fn matvec(w: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| w.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Incoming messages by explicit iteration over edges.
pub fn oracle_in(graph: &HetGraph, h: &Matrix, params: &ModelParams, layer: usize) -> Matrix {
    let d = params.layers[layer].output_dim();
    let mut out = Matrix::zeros(graph.num_nodes(), d);
    for e in graph.edges() {
        let c = graph.edge_norm(e);
        let msg = matvec(&relation_weight(params, layer, e.relation), h.row(e.src));
        for (o, m) in out.row_mut(e.dst).iter_mut().zip(msg) {
            *o += c * m;
        }
    }
    out
}

/// Outgoing messages by explicit iteration over edges: every edge `i → k`
/// adds `norm(i→k) · W_r h_i` to node `i`.
pub fn oracle_out(graph: &HetGraph, h: &Matrix, params: &ModelParams, layer: usize) -> Matrix {
    let d = params.layers[layer].output_dim();
    let mut out = Matrix::zeros(graph.num_nodes(), d);
    for e in graph.edges() {
        let c = graph.edge_norm(e);
        let msg = matvec(&relation_weight(params, layer, e.relation), h.row(e.src));
        for (o, m) in out.row_mut(e.src).iter_mut().zip(msg) {
            *o += c * m;
        }
    }
    out
}

/// One full layer from the oracles, including the teleport mix, PReLU and
/// row normalization.
pub fn oracle_layer(graph: &HetGraph, h: &Matrix, params: &ModelParams, layer: usize) -> Matrix {
    let lp = &params.layers[layer];
    let comps = params.spec.components;
    let (alpha, beta) = (params.alpha.item(), params.beta.item());
    let gamma = params.gamma();
    let n = graph.num_nodes();
    let hin = oracle_in(graph, h, params, layer);
    let hout = oracle_out(graph, h, params, layer);
    let slope = lp.prelu_slope.item();
    let mut out = Matrix::zeros(n, lp.output_dim());
    for i in 0..n {
        let own = matvec(&lp.self_weight, h.row(i));
        let mut row: Vec<f64> = (0..lp.output_dim())
            .map(|k| {
                let mut u = alpha * hin.get(i, k);
                if comps.nodal {
                    u += own[k];
                }
                if comps.outgoing {
                    u -= beta * hout.get(i, k);
                }
                if gamma > 0.0 {
                    u = (1.0 - gamma) * u + gamma / n as f64;
                }
                if u >= 0.0 {
                    u
                } else {
                    slope * u
                }
            })
            .collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        out.row_mut(i).copy_from_slice(&row);
    }
    out
}

pub fn task_name(t: Task) -> &'static str {
    t.as_str()
}

/// Brute-force metric implementations, written independently of the library.
pub mod brute {
    use std::collections::{BTreeSet, HashMap};

    use bhgnn::tensor::Matrix;

    pub fn accuracy(p: &[usize], t: &[usize]) -> f64 {
        let mut hits = 0;
        for i in 0..p.len() {
            if p[i] == t[i] {
                hits += 1;
            }
        }
        hits as f64 / p.len() as f64
    }

    pub fn macro_f1(p: &[usize], t: &[usize]) -> f64 {
        let labels: BTreeSet<usize> = p.iter().chain(t).copied().collect();
        let mut sum = 0.0;
        for &c in &labels {
            let tp = (0..p.len()).filter(|&i| p[i] == c && t[i] == c).count() as f64;
            let fp = (0..p.len()).filter(|&i| p[i] == c && t[i] != c).count() as f64;
            let fn_ = (0..p.len()).filter(|&i| p[i] != c && t[i] == c).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            sum += if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
        }
        sum / labels.len() as f64
    }

    fn entropy(v: &[usize]) -> f64 {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for &x in v {
            *counts.entry(x).or_default() += 1.0;
        }
        let n = v.len() as f64;
        -counts.values().map(|c| (c / n) * (c / n).ln()).sum::<f64>()
    }

    pub fn nmi(p: &[usize], t: &[usize]) -> f64 {
        let (hp, ht) = (entropy(p), entropy(t));
        if hp == 0.0 && ht == 0.0 {
            return 1.0;
        }
        let n = p.len() as f64;
        let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
        let mut mp: HashMap<usize, f64> = HashMap::new();
        let mut mt: HashMap<usize, f64> = HashMap::new();
        for i in 0..p.len() {
            *joint.entry((p[i], t[i])).or_default() += 1.0 / n;
            *mp.entry(p[i]).or_default() += 1.0 / n;
            *mt.entry(t[i]).or_default() += 1.0 / n;
        }
        let mi: f64 = joint
            .iter()
            .map(|(&(a, b), &pab)| pab * (pab / (mp[&a] * mt[&b])).ln())
            .sum();
        (mi / ((hp + ht) / 2.0)).clamp(0.0, 1.0)
    }

    /// Pair counting over all `n(n−1)/2` pairs.
    pub fn ari(p: &[usize], t: &[usize]) -> f64 {
        let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                match (p[i] == p[j], t[i] == t[j]) {
                    (true, true) => n11 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                    (false, false) => n00 += 1.0,
                }
            }
        }
        let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
        if denom == 0.0 {
            return 1.0;
        }
        2.0 * (n00 * n11 - n01 * n10) / denom
    }

    pub fn silhouette(x: &Matrix, labels: &[usize]) -> f64 {
        let n = x.rows();
        let dist = |i: usize, j: usize| -> f64 {
            let mut s = 0.0;
            for k in 0..x.cols() {
                s += (x.get(i, k) - x.get(j, k)).powi(2);
            }
            s.sqrt()
        };
        let clusters: BTreeSet<usize> = labels.iter().copied().collect();
        let mut total = 0.0;
        for i in 0..n {
            let mates: Vec<usize> = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect();
            if mates.is_empty() {
                continue;
            }
            let a = mates.iter().map(|&j| dist(i, j)).sum::<f64>() / mates.len() as f64;
            let mut b = f64::INFINITY;
            for &c in clusters.iter().filter(|&&c| c != labels[i]) {
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                b = b.min(members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64);
            }
            if a.max(b) > 0.0 {
                total += (b - a) / a.max(b);
            }
        }
        total / n as f64
    }
}
