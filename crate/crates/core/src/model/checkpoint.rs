//! Single-file checkpoint container: a JSON header with the model config
//! and tensor index, followed by raw little-endian `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError};

pub const CHECKPOINT_FORMAT_TAG: &str = "repurpose-loc/ckpt-v1";

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    model_config: ModelConfig,
    tensors: Vec<TensorMeta>,
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<(), ModelError> {
    let header = Header {
        format: CHECKPOINT_FORMAT_TAG.to_string(),
        model_config: model.config().clone(),
        tensors: model
            .params()
            .iter()
            .map(|(_, name, v)| TensorMeta {
                name: name.to_string(),
                rows: v.nrows(),
                cols: v.ncols(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| ModelError::CorruptCheckpoint {
        reason: format!("header serialization failed: {e}"),
    })?;

    let file = File::create(path).map_err(ModelError::CheckpointWrite)?;
    let mut w = BufWriter::new(file);
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(ModelError::CheckpointWrite)?;
    w.write_all(&header_bytes).map_err(ModelError::CheckpointWrite)?;
    for (_, _, v) in model.params().iter() {
        for &x in v.iter() {
            w.write_all(&x.to_le_bytes()).map_err(ModelError::CheckpointWrite)?;
        }
    }
    w.flush().map_err(ModelError::CheckpointWrite)
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let file = File::open(path).map_err(ModelError::CheckpointRead)?;
    let mut r = BufReader::new(file);

    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(ModelError::CheckpointRead)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 64 * 1024 * 1024 {
        return Err(ModelError::CorruptCheckpoint {
            reason: format!("implausible header length {header_len}"),
        });
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(ModelError::CheckpointRead)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| ModelError::CorruptCheckpoint {
            reason: format!("header parse failed: {e}"),
        })?;
    if header.format != CHECKPOINT_FORMAT_TAG {
        return Err(ModelError::UnsupportedFormat {
            found: header.format,
            expected: CHECKPOINT_FORMAT_TAG.to_string(),
        });
    }

    // Rebuild the architecture from the stored config, then overwrite every
    // parameter by name so a header/architecture drift is caught loudly.
    let mut model = Model::new(header.model_config, 0)?;
    if header.tensors.len() != model.params().len() {
        return Err(ModelError::CorruptCheckpoint {
            reason: format!(
                "checkpoint stores {} tensors, architecture has {}",
                header.tensors.len(),
                model.params().len()
            ),
        });
    }
    for meta in &header.tensors {
        let mut data = vec![0.0f64; meta.rows * meta.cols];
        let mut buf = [0u8; 8];
        for slot in data.iter_mut() {
            r.read_exact(&mut buf).map_err(ModelError::CheckpointRead)?;
            *slot = f64::from_le_bytes(buf);
        }
        let id = model
            .params()
            .find(&meta.name)
            .ok_or_else(|| ModelError::CorruptCheckpoint {
                reason: format!("unknown tensor {:?} in checkpoint", meta.name),
            })?;
        let expected = model.params().value(id).dim();
        if expected != (meta.rows, meta.cols) {
            return Err(ModelError::CorruptCheckpoint {
                reason: format!(
                    "tensor {:?} has shape {:?}, architecture expects {:?}",
                    meta.name,
                    (meta.rows, meta.cols),
                    expected
                ),
            });
        }
        let arr = Array2::from_shape_vec((meta.rows, meta.cols), data).map_err(|e| {
            ModelError::CorruptCheckpoint {
                reason: format!("tensor {:?}: {e}", meta.name),
            }
        })?;
        model.params_mut().set(id, arr);
    }
    Ok(model)
}
