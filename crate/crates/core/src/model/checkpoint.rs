//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `BHGNNCK1`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every array listed in the header as row-major
//! little-endian `f64` values, in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, ModelSpec, Task};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"BHGNNCK1";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on the header size accepted by the reader.
const MAX_HEADER: u64 = 1 << 26;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub task: Task,
    /// Layer count in the CLI convention (convolutions + 1).
    pub layers: usize,
    pub gamma: f64,
    pub spec: ModelSpec,
    pub arrays: Vec<ArrayEntry>,
    /// Training configuration the parameters were produced with.
    pub config: serde_json::Value,
}

/// Parameters plus the configuration stored alongside them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: serde_json::Value,
}

pub fn write_checkpoint(
    mut w: impl Write,
    params: &ModelParams,
    config: &serde_json::Value,
) -> Result<(), ModelError> {
    let named = params.named();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        task: params.spec.task,
        layers: params.spec.dims.len(),
        gamma: params.gamma(),
        spec: params.spec.clone(),
        arrays: named
            .iter()
            .map(|(name, m)| ArrayEntry {
                name: name.clone(),
                shape: m.shape(),
            })
            .collect(),
        config: config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, m) in named {
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint, ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(ModelError::Checkpoint(format!(
            "header length {len} is implausible"
        )));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }

    let mut params = ModelParams::init(header.spec.clone(), 0)?;
    let expected: Vec<(String, (usize, usize))> = params
        .named()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    if expected.len() != header.arrays.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} arrays, header lists {}",
            expected.len(),
            header.arrays.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.arrays) {
        if *name != entry.name || *shape != entry.shape {
            return Err(ModelError::Checkpoint(format!(
                "array {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
    }
    let mut buf = [0u8; 8];
    for m in params.matrices_mut() {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        *m = Matrix::from_vec(rows, cols, data);
    }
    if r.read(&mut buf)? != 0 {
        return Err(ModelError::Checkpoint(
            "trailing bytes after the last array".into(),
        ));
    }
    Ok(Checkpoint {
        params,
        config: header.config,
    })
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    config: &serde_json::Value,
) -> Result<(), ModelError> {
    write_checkpoint(BufWriter::new(File::create(path)?), params, config)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
