//! Parameter checkpoints.
//!
//! Layout: the magic `DGNP`, a little-endian `u64` header length, a JSON header
//! (format version, network shape, tensor names and shapes), then every tensor
//! as little-endian `f64` in header order. Round-trips are bit-exact.

use super::{NetworkParams, NetworkShape};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"DGNP";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor {name} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    shape: NetworkShape,
    tensors: Vec<TensorHeader>,
}

pub fn write_checkpoint(params: &NetworkParams, mut out: impl Write) -> Result<(), CheckpointError> {
    let header = Header {
        version: params.version,
        shape: params.shape,
        tensors: params
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| TensorHeader { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for t in params.tensors() {
        for x in t {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(mut input: impl Read) -> Result<NetworkParams, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.version != super::PARAMS_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    let mut params = NetworkParams::zeros_like_shape(header.shape);
    for ((name, expected), found) in params.tensor_specs().into_iter().zip(&header.tensors) {
        if found.name != name || found.shape != expected {
            return Err(CheckpointError::Shape {
                name,
                expected,
                found: found.shape.clone(),
            });
        }
    }
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            input.read_exact(&mut buf)?;
            *x = f64::from_le_bytes(buf);
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
