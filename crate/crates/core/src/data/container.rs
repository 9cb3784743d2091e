//! Per-video feature containers: one flat little-endian `f32` array plus a
//! JSON sidecar per modality, framework-neutral on purpose.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Audio,
    Caption,
}

impl Modality {
    pub fn name(&self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Caption => "caption",
        }
    }

    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Caption];
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    rows: usize,
    cols: usize,
    dtype: String,
    modality: String,
}

/// Writes `<dir>/<modality>.bin` (row-major little-endian f32) and its
/// `<modality>.json` sidecar.
pub fn write_features(dir: &Path, modality: Modality, features: &Array2<f64>) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(DataError::io(dir))?;
    let base = dir.join(modality.name());
    let bin_path = base.with_extension("bin");
    let mut bytes = Vec::with_capacity(features.len() * 4);
    for &v in features.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&bin_path, bytes).map_err(DataError::io(&bin_path))?;

    let sidecar = Sidecar {
        rows: features.nrows(),
        cols: features.ncols(),
        dtype: "f32".into(),
        modality: modality.name().into(),
    };
    let json_path = base.with_extension("json");
    let body = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&json_path, body).map_err(DataError::io(&json_path))?;
    Ok(())
}

/// Reads one modality back as `f64`, validating the sidecar against the
/// byte payload.
pub fn read_features(dir: &Path, modality: Modality) -> Result<Array2<f64>, DataError> {
    let base = dir.join(modality.name());
    let json_path = base.with_extension("json");
    let bin_path = base.with_extension("bin");

    let sidecar_bytes = fs::read(&json_path).map_err(DataError::io(&json_path))?;
    let sidecar: Sidecar =
        serde_json::from_slice(&sidecar_bytes).map_err(|e| DataError::CorruptContainer {
            path: json_path.clone(),
            reason: format!("sidecar parse failed: {e}"),
        })?;
    if sidecar.dtype != "f32" {
        return Err(DataError::CorruptContainer {
            path: json_path.clone(),
            reason: format!("unsupported dtype {:?}", sidecar.dtype),
        });
    }
    if sidecar.modality != modality.name() {
        return Err(DataError::CorruptContainer {
            path: json_path,
            reason: format!(
                "sidecar says modality {:?}, expected {:?}",
                sidecar.modality,
                modality.name()
            ),
        });
    }

    let bytes = fs::read(&bin_path).map_err(DataError::io(&bin_path))?;
    let expected_len = sidecar.rows * sidecar.cols * 4;
    if bytes.len() != expected_len {
        return Err(DataError::CorruptContainer {
            path: bin_path,
            reason: format!(
                "payload is {} bytes, sidecar implies {expected_len}",
                bytes.len()
            ),
        });
    }
    let mut data = Vec::with_capacity(sidecar.rows * sidecar.cols);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Array2::from_shape_vec((sidecar.rows, sidecar.cols), data).map_err(|e| {
        DataError::CorruptContainer {
            path: bin_path,
            reason: e.to_string(),
        }
    })
}

/// Optional per-segment empty-caption flags, `<dir>/caption_empty.json`.
pub fn write_caption_empty(dir: &Path, flags: &[bool]) -> Result<(), DataError> {
    let path = dir.join("caption_empty.json");
    let body = serde_json::to_vec(flags).expect("flags serialize");
    fs::write(&path, body).map_err(DataError::io(&path))
}

pub fn read_caption_empty(dir: &Path) -> Result<Option<Vec<bool>>, DataError> {
    let path = dir.join("caption_empty.json");
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path).map_err(DataError::io(&path))?;
    let flags: Vec<bool> =
        serde_json::from_slice(&bytes).map_err(|e| DataError::CorruptContainer {
            path,
            reason: format!("caption_empty parse failed: {e}"),
        })?;
    Ok(Some(flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn features_round_trip_through_f32() {
        let dir = tempdir().unwrap();
        let m = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 - 3.0) * 0.25 + j as f64);
        write_features(dir.path(), Modality::Visual, &m).unwrap();
        let back = read_features(dir.path(), Modality::Visual).unwrap();
        assert_eq!(back.dim(), (7, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempdir().unwrap();
        let m = Array2::zeros((4, 4));
        write_features(dir.path(), Modality::Audio, &m).unwrap();
        let bin = dir.path().join("audio.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_features(dir.path(), Modality::Audio).unwrap_err();
        assert!(matches!(err, DataError::CorruptContainer { .. }));
    }

    #[test]
    fn wrong_modality_sidecar_is_rejected() {
        let dir = tempdir().unwrap();
        let m = Array2::zeros((2, 2));
        write_features(dir.path(), Modality::Caption, &m).unwrap();
        // read it back under the wrong name
        fs::rename(
            dir.path().join("caption.json"),
            dir.path().join("visual.json"),
        )
        .unwrap();
        fs::rename(dir.path().join("caption.bin"), dir.path().join("visual.bin")).unwrap();
        let err = read_features(dir.path(), Modality::Visual).unwrap_err();
        assert!(matches!(err, DataError::CorruptContainer { .. }));
    }

    #[test]
    fn caption_empty_flags_round_trip_and_default_to_none() {
        let dir = tempdir().unwrap();
        assert!(read_caption_empty(dir.path()).unwrap().is_none());
        write_caption_empty(dir.path(), &[true, false, true]).unwrap();
        assert_eq!(
            read_caption_empty(dir.path()).unwrap().unwrap(),
            vec![true, false, true]
        );
    }
}
