//! On-disk dataset format.
//!
//! A dataset directory holds:
//! - `nodes.tsv`: `node_id type_id [label_id]`; a missing label is an
//!   absent column or `-`.
//! - `edges.tsv`: `src dst [relation] [weight]`, one directed edge per line.
//! - `features.csv` (dense, one row per node in id order) or `features.tsv`
//!   (sparse `row col value` triplets, width `max col + 1`).
//!
//! Fields are separated by tabs or spaces, `#` starts a comment, ids are
//! 0-based decimal integers.

use std::fmt;
use std::path::Path;

use super::{HarnessError, RelationMode};
use crate::graph::{build_graph, relations_from_node_types, Edge, GraphError, HetGraph};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    pub relations: RelationMode,
    pub unweighted: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            relations: RelationMode::Auto,
            unweighted: false,
        }
    }
}

/// Size summary in the usual dataset-table layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub node_types: usize,
    pub relations: usize,
    pub features: usize,
    pub classes: usize,
    /// `m / n`, equal for in- and out-degree.
    pub average_degree: f64,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>9} {:>5} {:>5} {:>7} {:>8}",
            "dataset", "n", "m", "|T|", "|R|", "f", "<k>"
        )?;
        write!(
            f,
            "{:<16} {:>8} {:>9} {:>5} {:>5} {:>7} {:>8.3}",
            self.name,
            self.nodes,
            self.edges,
            self.node_types,
            self.relations,
            self.features,
            self.average_degree
        )
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub graph: HetGraph,
    pub summary: DatasetSummary,
    /// Whether `edges.tsv` carried a relation column.
    pub has_relation_column: bool,
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then(|| {
            (
                k + 1,
                line.split(['\t', ' ', ','])
                    .filter(|s| !s.is_empty())
                    .collect(),
            )
        })
    })
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn field<T: std::str::FromStr>(
    file: &str,
    line: usize,
    value: &str,
    what: &str,
) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::Parse {
        file: file.to_string(),
        line,
        message: format!("invalid {what} {value:?}"),
    })
}

struct Nodes {
    types: Vec<usize>,
    labels: Vec<Option<usize>>,
}

fn parse_nodes(path: &Path) -> Result<Nodes, HarnessError> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut rows: Vec<(usize, usize, usize, Option<usize>)> = Vec::new();
    for (line, cols) in records(&text) {
        if !(2..=3).contains(&cols.len()) {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("expected 2 or 3 columns, found {}", cols.len()),
            });
        }
        let id = field(&file, line, cols[0], "node id")?;
        let ty = field(&file, line, cols[1], "type id")?;
        let label = match cols.get(2) {
            None | Some(&"-") => None,
            Some(v) => Some(field(&file, line, v, "label id")?),
        };
        rows.push((line, id, ty, label));
    }
    let n = rows.len();
    let mut types = vec![usize::MAX; n];
    let mut labels = vec![None; n];
    for (line, id, ty, label) in rows {
        if id >= n {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("node id {id} out of range: {n} nodes listed, ids must be 0..{n}"),
            });
        }
        if types[id] != usize::MAX {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("duplicate node id {id}"),
            });
        }
        types[id] = ty;
        labels[id] = label;
    }
    Ok(Nodes { types, labels })
}

struct RawEdges {
    /// `(line, src, dst, relation, weight)`.
    rows: Vec<(usize, usize, usize, Option<usize>, f64)>,
    has_relation: bool,
}

fn parse_edges(path: &Path, n: usize) -> Result<RawEdges, HarnessError> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut rows = Vec::new();
    let mut width: Option<(usize, usize)> = None;
    for (line, cols) in records(&text) {
        if !(2..=4).contains(&cols.len()) {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("expected 2 to 4 columns, found {}", cols.len()),
            });
        }
        match width {
            None => width = Some((cols.len(), line)),
            Some((w, first)) if w != cols.len() => {
                return Err(HarnessError::Parse {
                    file,
                    line,
                    message: format!("{} columns, but line {first} has {w}", cols.len()),
                })
            }
            _ => {}
        }
        let src: usize = field(&file, line, cols[0], "source id")?;
        let dst: usize = field(&file, line, cols[1], "target id")?;
        for id in [src, dst] {
            if id >= n {
                return Err(HarnessError::Parse {
                    file,
                    line,
                    message: format!("dangling node id {id} (nodes.tsv lists {n} nodes)"),
                });
            }
        }
        let relation = cols
            .get(2)
            .map(|v| field(&file, line, v, "relation id"))
            .transpose()?;
        let weight = match cols.get(3) {
            Some(v) => {
                let w: f64 = field(&file, line, v, "weight")?;
                if !(w > 0.0) || !w.is_finite() {
                    return Err(HarnessError::Parse {
                        file,
                        line,
                        message: format!("weight {w} is not positive"),
                    });
                }
                w
            }
            None => 1.0,
        };
        rows.push((line, src, dst, relation, weight));
    }
    let has_relation = width.is_some_and(|(w, _)| w >= 3);
    Ok(RawEdges { rows, has_relation })
}

fn parse_dense_features(path: &Path, n: usize) -> Result<Matrix, HarnessError> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, fields) in records(&text) {
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(HarnessError::Parse {
                    file,
                    line,
                    message: format!("{} values, expected {c}", fields.len()),
                })
            }
            _ => {}
        }
        for v in fields {
            let x: f64 = field(&file, line, v, "feature value")?;
            if !x.is_finite() {
                return Err(HarnessError::Parse {
                    file,
                    line,
                    message: format!("non-finite feature {v:?}"),
                });
            }
            data.push(x);
        }
        rows += 1;
    }
    if rows != n {
        return Err(HarnessError::Dataset {
            file,
            message: format!("{rows} feature rows for {n} nodes"),
        });
    }
    Ok(Matrix::from_vec(n, cols.unwrap_or(0), data))
}

fn parse_sparse_features(path: &Path, n: usize) -> Result<Matrix, HarnessError> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut triplets = Vec::new();
    for (line, fields) in records(&text) {
        if fields.len() != 3 {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("expected `row col value`, found {} fields", fields.len()),
            });
        }
        let r: usize = field(&file, line, fields[0], "row")?;
        let c: usize = field(&file, line, fields[1], "column")?;
        let v: f64 = field(&file, line, fields[2], "value")?;
        if r >= n {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("row {r} out of range for {n} nodes"),
            });
        }
        if !v.is_finite() {
            return Err(HarnessError::Parse {
                file,
                line,
                message: format!("non-finite feature {v}"),
            });
        }
        triplets.push((r, c, v));
    }
    let f = triplets.iter().map(|t| t.1 + 1).max().unwrap_or(0);
    let mut x = Matrix::zeros(n, f);
    for (r, c, v) in triplets {
        x.set(r, c, x.get(r, c) + v);
    }
    Ok(x)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path, options: LoadOptions) -> Result<LoadedDataset, HarnessError> {
    let nodes = parse_nodes(&dir.join("nodes.tsv"))?;
    let n = nodes.types.len();
    if n == 0 {
        return Err(HarnessError::Dataset {
            file: dir.join("nodes.tsv").display().to_string(),
            message: "no nodes".into(),
        });
    }
    let edges_path = dir.join("edges.tsv");
    let raw = parse_edges(&edges_path, n)?;
    if raw.rows.is_empty() {
        log::warn!("{}: no edges", edges_path.display());
    }
    let dense = dir.join("features.csv");
    let sparse = dir.join("features.tsv");
    let features = if dense.exists() {
        parse_dense_features(&dense, n)?
    } else if sparse.exists() {
        parse_sparse_features(&sparse, n)?
    } else {
        return Err(HarnessError::Dataset {
            file: dir.display().to_string(),
            message: "missing features.csv or features.tsv".into(),
        });
    };

    let pairs: Vec<(usize, usize)> = raw.rows.iter().map(|r| (r.1, r.2)).collect();
    let relations: Vec<usize> = match (options.relations, raw.has_relation) {
        (RelationMode::Explicit | RelationMode::Auto, true) => {
            raw.rows.iter().map(|r| r.3.unwrap_or(0)).collect()
        }
        (RelationMode::Explicit, false) => {
            return Err(HarnessError::Dataset {
                file: edges_path.display().to_string(),
                message: "explicit relations requested but the file has no relation column".into(),
            })
        }
        (RelationMode::Auto | RelationMode::Types, _) => {
            relations_from_node_types(&pairs, &nodes.types)
        }
        (RelationMode::Classes, _) => {
            let unlabeled = nodes
                .labels
                .iter()
                .flatten()
                .map(|l| l + 1)
                .max()
                .unwrap_or(0);
            let pseudo: Vec<usize> = nodes
                .labels
                .iter()
                .map(|l| l.unwrap_or(unlabeled))
                .collect();
            relations_from_node_types(&pairs, &pseudo)
        }
        (RelationMode::Uniform, _) => vec![0; pairs.len()],
    };
    let edges: Vec<Edge> = raw
        .rows
        .iter()
        .zip(&relations)
        .map(|(r, &relation)| Edge {
            src: r.1,
            dst: r.2,
            relation,
            weight: r.4,
        })
        .collect();
    let weighted = !options.unweighted && raw.rows.iter().any(|r| r.4 != 1.0);
    let graph =
        build_graph(edges, features, nodes.types, nodes.labels, weighted).map_err(|e| match e {
            GraphError::NodeOutOfRange { record, .. }
            | GraphError::NonPositiveWeight { record, .. } => HarnessError::Parse {
                file: edges_path.display().to_string(),
                line: raw.rows[record].0,
                message: e.to_string(),
            },
            other => other.into(),
        })?;
    let summary = DatasetSummary {
        name: dir.file_name().map_or_else(
            || dir.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        ),
        nodes: graph.num_nodes(),
        edges: graph.num_edges(),
        node_types: graph.num_node_types(),
        relations: graph.num_relations(),
        features: graph.feature_dim(),
        classes: graph.num_classes(),
        average_degree: graph.num_edges() as f64 / graph.num_nodes() as f64,
    };
    Ok(LoadedDataset {
        graph,
        summary,
        has_relation_column: raw.has_relation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "nodes.tsv",
            "# id type label\n0\t0\t1\n1\t1\t0\n2\t0\t-\n",
        );
        write(dir.path(), "edges.tsv", "0\t1\n1\t2\n2 0\n");
        write(dir.path(), "features.csv", "1,0\n0,1\n1,1\n");
        dir
    }

    #[test]
    fn loads_and_derives_relations_from_types() {
        let dir = fixture();
        let d = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(
            (d.summary.nodes, d.summary.edges, d.summary.features),
            (3, 3, 2)
        );
        // Pairs (0,1), (1,0), (0,0) → ids 1, 2, 0.
        let rels: Vec<usize> = d.graph.edges().iter().map(|e| e.relation).collect();
        assert_eq!(rels, vec![1, 2, 0]);
        assert_eq!(d.graph.labels()[2], None);
        assert!(!d.graph.is_weighted());
    }

    #[test]
    fn dangling_ids_name_the_line() {
        let dir = fixture();
        write(dir.path(), "edges.tsv", "0\t1\n# fine\n1\t7\n");
        let err = load_dataset(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("edges.tsv:3"));
    }

    #[test]
    fn empty_edge_file_is_allowed() {
        let dir = fixture();
        write(dir.path(), "edges.tsv", "# nothing\n");
        let d = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(d.graph.num_edges(), 0);
    }

    #[test]
    fn sparse_features_and_weights() {
        let dir = fixture();
        std::fs::remove_file(dir.path().join("features.csv")).unwrap();
        write(dir.path(), "features.tsv", "0 3 1.5\n2 0 -1\n");
        write(dir.path(), "edges.tsv", "0 1 0 2.5\n1 2 1 1\n");
        let d = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(d.graph.feature_dim(), 4);
        assert_eq!(d.graph.features().get(0, 3), 1.5);
        assert!(d.graph.is_weighted());
        assert_eq!(d.graph.in_weight_sum()[1], 2.5);
        let u = load_dataset(
            dir.path(),
            LoadOptions {
                relations: RelationMode::Uniform,
                unweighted: true,
            },
        )
        .unwrap();
        assert_eq!(u.graph.in_weight_sum()[1], 1.0);
        assert_eq!(u.graph.num_relations(), 1);
    }

    #[test]
    fn schema_violations_are_reported() {
        let dir = fixture();
        write(dir.path(), "features.csv", "1,0\n0,1\n");
        assert!(matches!(
            load_dataset(dir.path(), LoadOptions::default()),
            Err(HarnessError::Dataset { .. })
        ));
        write(dir.path(), "features.csv", "1,0\n0,1\n1,1\n");
        write(dir.path(), "edges.tsv", "0 1 0 -2\n");
        assert!(matches!(
            load_dataset(dir.path(), LoadOptions::default()),
            Err(HarnessError::Parse { line: 1, .. })
        ));
        write(dir.path(), "edges.tsv", "0 1\n");
        write(dir.path(), "nodes.tsv", "0 0\n0 1\n");
        assert!(load_dataset(dir.path(), LoadOptions::default()).is_err());
        std::fs::remove_file(dir.path().join("nodes.tsv")).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), LoadOptions::default()),
            Err(HarnessError::Io { .. })
        ));
    }
}
