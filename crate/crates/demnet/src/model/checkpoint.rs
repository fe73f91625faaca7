//! Bit-exact checkpoint serialization.
//!
//! Layout: magic `DSCK`, version byte 1, a little-endian u32 header
//! length, a UTF-8 JSON header (config, seed, epoch, Adam step counter,
//! tensor manifest), then every tensor as raw little-endian f32 in
//! manifest order. Offsets in the manifest count f32 elements from the
//! start of the payload. Saving the same state twice produces identical
//! bytes, and any size mismatch (truncation or trailing data) is a format
//! error naming the byte position.

use super::{build_model, ModelConfig, TrainState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DSCK";
const VERSION: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the f32 payload.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    adam_t: u64,
    tensors: Vec<TensorEntry>,
}

/// Tensors in serialization order: trainable parameters, batchnorm running
/// statistics, then first and second Adam moments (one per parameter).
fn manifest(state: &TrainState) -> (Vec<String>, Vec<&Tensor<f32>>) {
    let mut names = state.network.param_names();
    names.extend(state.network.state_names());
    let param_names = state.network.param_names();
    names.extend(param_names.iter().map(|n| format!("adam.m.{n}")));
    names.extend(param_names.iter().map(|n| format!("adam.v.{n}")));

    let mut tensors = state.network.params();
    tensors.extend(state.network.state_tensors());
    let (m, v) = state.adam.moments();
    tensors.extend(m.iter());
    tensors.extend(v.iter());
    (names, tensors)
}

/// Serializes the state to `path`. The `best` snapshot is not stored; save
/// it as its own checkpoint if needed.
pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    let (names, tensors) = manifest(state);
    let mut entries = Vec::with_capacity(names.len());
    let mut offset = 0usize;
    for (name, tensor) in names.iter().zip(&tensors) {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        offset += tensor.len();
    }
    let header = Header {
        config: state.config.clone(),
        seed: state.seed,
        epoch: state.epoch,
        adam_t: state.adam.t,
        tensors: entries,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let header_len = u32::try_from(header_json.len())
        .map_err(|_| Error::Format("checkpoint header exceeds u32 length".into()))?;

    let mut bytes = Vec::with_capacity(4 + 1 + 4 + header_json.len() + 4 * offset);
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&header_len.to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for tensor in tensors {
        for &v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, rebuilding the runtime state and verifying the
/// manifest against the config layer by layer.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 9 {
        return Err(fail(format!("truncated preamble: {} bytes, need at least 9", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail(format!("bad magic {:?}, expected {MAGIC:?}", &bytes[0..4])));
    }
    if bytes[4] != VERSION {
        return Err(fail(format!("unsupported version {}, expected {VERSION}", bytes[4])));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let payload_start = 9 + header_len;
    if bytes.len() < payload_start {
        return Err(fail(format!(
            "truncated header: declared {header_len} bytes at offset 9, file ends at {}",
            bytes.len()
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[9..payload_start])
        .map_err(|e| fail(format!("header is not valid JSON: {e}")))?;

    let mut state = build_model(&header.config)?;
    state.seed = header.seed;
    state.epoch = header.epoch;

    // The manifest must mirror the config-derived layout exactly.
    let (names, _) = manifest(&state);
    if header.tensors.len() != names.len() {
        return Err(fail(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            names.len()
        )));
    }
    let mut expected_offset = 0usize;
    let mut shapes = Vec::with_capacity(names.len());
    for (i, (entry, name)) in header.tensors.iter().zip(&names).enumerate() {
        if &entry.name != name {
            return Err(fail(format!("tensor {i} is named {:?}, expected {name:?}", entry.name)));
        }
        if entry.offset != expected_offset {
            return Err(fail(format!(
                "tensor {:?} at element offset {}, expected {expected_offset}",
                entry.name, entry.offset
            )));
        }
        expected_offset += entry.shape.iter().product::<usize>();
        shapes.push(entry.shape.clone());
    }
    let payload_bytes = bytes.len() - payload_start;
    let expected_bytes = 4 * expected_offset;
    if payload_bytes < expected_bytes {
        return Err(fail(format!(
            "truncated payload: {expected_bytes} bytes expected at offset {payload_start}, found {payload_bytes}"
        )));
    }
    if payload_bytes > expected_bytes {
        return Err(fail(format!(
            "trailing data after payload at byte {}",
            payload_start + expected_bytes
        )));
    }

    let floats: Vec<f32> = bytes[payload_start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let read_at = |entry_index: usize, offset: usize| -> Result<Tensor<f32>> {
        let len: usize = shapes[entry_index].iter().product();
        Tensor::from_vec(&shapes[entry_index], floats[offset..offset + len].to_vec())
    };

    let n_params = state.network.params().len();
    let n_state = state.network.state_tensors().len();
    let mut cursor = 0usize;
    let mut idx = 0usize;
    for target in state.network.params_mut() {
        let loaded = read_at(idx, cursor)?;
        if loaded.shape() != target.shape() {
            return Err(fail(format!(
                "tensor {:?} has shape {:?}, config implies {:?}",
                names[idx],
                loaded.shape(),
                target.shape()
            )));
        }
        cursor += loaded.len();
        idx += 1;
        *target = loaded;
    }
    for target in state.network.state_tensors_mut() {
        let loaded = read_at(idx, cursor)?;
        if loaded.shape() != target.shape() {
            return Err(fail(format!(
                "tensor {:?} has shape {:?}, config implies {:?}",
                names[idx],
                loaded.shape(),
                target.shape()
            )));
        }
        cursor += loaded.len();
        idx += 1;
        *target = loaded;
    }
    let mut m = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let loaded = read_at(idx, cursor)?;
        cursor += loaded.len();
        idx += 1;
        m.push(loaded);
    }
    let mut v = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let loaded = read_at(idx, cursor)?;
        cursor += loaded.len();
        idx += 1;
        v.push(loaded);
    }
    let _ = n_state;
    state.adam.restore(header.adam_t, m, v)?;
    Ok(state)
}
