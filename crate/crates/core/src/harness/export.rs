//! Embedding export as CSV: `node_id,label,z_1..z_d`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::HarnessError;
use crate::graph::HetGraph;
use crate::model::{embed, ModelInput, ModelParams};
use crate::tensor::{Matrix, Tape};

/// Final-layer embeddings of every node, before any task head.
pub fn embeddings(params: &ModelParams, graph: &HetGraph) -> Result<Matrix, HarnessError> {
    let tape = Tape::new();
    let leaves = params.register_constant(&tape);
    let h = embed(params, &leaves, &tape, &ModelInput::new(graph))?;
    Ok(h.value().as_ref().clone())
}

/// Computes and writes the embeddings of `graph`; returns them.
pub fn export_embeddings(
    params: &ModelParams,
    graph: &HetGraph,
    path: &Path,
) -> Result<Matrix, HarnessError> {
    let z = embeddings(params, graph)?;
    write_embeddings(path, graph.labels(), &z)?;
    Ok(z)
}

/// Writes one row per node; values use the shortest round-tripping form and
/// a missing label is an empty field.
pub fn write_embeddings(
    path: &Path,
    labels: &[Option<usize>],
    z: &Matrix,
) -> Result<(), HarnessError> {
    if labels.len() != z.rows() {
        return Err(HarnessError::Invalid(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            z.rows()
        )));
    }
    let io = |e| HarnessError::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut header = vec!["node_id".to_string(), "label".to_string()];
    header.extend((1..=z.cols()).map(|k| format!("z_{k}")));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (i, label) in labels.iter().enumerate() {
        write!(
            w,
            "{i},{}",
            label.map_or_else(String::new, |l| l.to_string())
        )
        .map_err(io)?;
        for v in z.row(i) {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a file written by [`write_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<(Vec<Option<usize>>, Matrix), HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let name = path.display().to_string();
    let parse_err = |line: usize, message: String| HarnessError::Parse {
        file: name.clone(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| HarnessError::io(path, e))?;
    let cols = header
        .split(',')
        .count()
        .checked_sub(2)
        .ok_or_else(|| parse_err(1, "header needs node_id and label".into()))?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        let lineno = k + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols + 2 {
            return Err(parse_err(
                lineno,
                format!("{} fields, expected {}", fields.len(), cols + 2),
            ));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid node id {:?}", fields[0])))?;
        if id != labels.len() {
            return Err(parse_err(lineno, format!("node id {id} out of order")));
        }
        labels.push(if fields[1].is_empty() {
            None
        } else {
            Some(
                fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("invalid label {:?}", fields[1])))?,
            )
        });
        for v in &fields[2..] {
            data.push(
                v.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("invalid value {v:?}")))?,
            );
        }
    }
    let rows = labels.len();
    Ok((labels, Matrix::from_vec(rows, cols, data)))
}
