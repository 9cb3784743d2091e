//! Dataset manifests and the train/val/test split.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub duration: f64,
    /// Feature container directory, relative to the manifest file.
    pub feature_path: String,
    /// Annotation JSON, relative to the manifest file.
    pub annotation_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(split: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self, DataError> {
        let manifest = Self {
            split: split.into(),
            entries,
        };
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    fn check_unique_ids(&self) -> Result<(), DataError> {
        let mut seen = std::collections::HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.video_id.as_str()) {
                return Err(DataError::DuplicateVideoId {
                    id: entry.video_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(DataError::io(parent))?;
        }
        let body = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(path, body).map_err(DataError::io(path))
    }

    /// Loads a manifest and checks ids are unique and every referenced path
    /// resolves relative to the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(DataError::io(path))?;
        let manifest: DatasetManifest =
            serde_json::from_slice(&bytes).map_err(|e| DataError::SchemaError {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        manifest.check_unique_ids()?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in &manifest.entries {
            for rel in [&entry.feature_path, &entry.annotation_path] {
                let resolved = base.join(rel);
                if !resolved.exists() {
                    return Err(DataError::MissingPath { path: resolved });
                }
            }
        }
        Ok(manifest)
    }
}

/// Deterministic train/val/test split.
///
/// Entries are ordered by video id, shuffled with the seed, then cut into
/// `train | val | test` blocks. Block sizes follow the ratios with any
/// remainder going to train, except that val and test always get at least
/// one entry each (hence the 3-entry minimum).
pub fn split_manifest(
    entries: Vec<ManifestEntry>,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest), DataError> {
    let n = entries.len();
    if n < 3 {
        return Err(DataError::TooFewEntries { got: n });
    }
    let total = (ratios.0 + ratios.1 + ratios.2) as f64;
    if total == 0.0 {
        return Err(DataError::InvalidConfig {
            reason: "split ratios must not all be zero".into(),
        });
    }
    let mut ordered = entries;
    ordered.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    {
        let mut seen = std::collections::HashSet::new();
        for e in &ordered {
            if !seen.insert(e.video_id.as_str()) {
                return Err(DataError::DuplicateVideoId {
                    id: e.video_id.clone(),
                });
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);

    let val_n = (((n as f64) * ratios.1 as f64 / total).floor() as usize).max(1);
    let test_n = (((n as f64) * ratios.2 as f64 / total).floor() as usize).max(1);
    let train_n = n - val_n - test_n;

    let mut iter = ordered.into_iter();
    let train: Vec<_> = iter.by_ref().take(train_n).collect();
    let val: Vec<_> = iter.by_ref().take(val_n).collect();
    let test: Vec<_> = iter.collect();

    Ok((
        DatasetManifest::new("train", train)?,
        DatasetManifest::new("val", val)?,
        DatasetManifest::new("test", test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(n: usize) -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry {
                video_id: format!("vid_{i:03}"),
                duration: 100.0 + i as f64,
                feature_path: format!("features/vid_{i:03}"),
                annotation_path: format!("annotations/vid_{i:03}.json"),
            })
            .collect()
    }

    #[test]
    fn ten_entries_split_eight_one_one() {
        let (train, val, test) = split_manifest(entries(10), (8, 1, 1), 7).unwrap();
        assert_eq!((train.entries.len(), val.entries.len(), test.entries.len()), (8, 1, 1));
    }

    #[test]
    fn twelve_entries_put_remainder_in_train() {
        let (train, val, test) = split_manifest(entries(12), (8, 1, 1), 7).unwrap();
        assert_eq!((train.entries.len(), val.entries.len(), test.entries.len()), (10, 1, 1));
    }

    #[test]
    fn three_entries_split_one_each() {
        let (train, val, test) = split_manifest(entries(3), (8, 1, 1), 7).unwrap();
        assert_eq!((train.entries.len(), val.entries.len(), test.entries.len()), (1, 1, 1));
    }

    #[test]
    fn too_few_entries_is_an_error() {
        let err = split_manifest(entries(2), (8, 1, 1), 7).unwrap_err();
        assert!(matches!(err, DataError::TooFewEntries { got: 2 }));
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seed_deterministic() {
        let all = entries(37);
        let (t1, v1, e1) = split_manifest(all.clone(), (8, 1, 1), 99).unwrap();
        let (t2, v2, e2) = split_manifest(all.clone(), (8, 1, 1), 99).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        assert_eq!(e1, e2);

        let mut ids: Vec<&str> = t1
            .entries
            .iter()
            .chain(&v1.entries)
            .chain(&e1.entries)
            .map(|e| e.video_id.as_str())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 37, "split must be disjoint and exhaustive");

        // input order must not matter
        let mut reversed = all.clone();
        reversed.reverse();
        let (t3, _, _) = split_manifest(reversed, (8, 1, 1), 99).unwrap();
        assert_eq!(t1, t3);

        // a different seed produces a different assignment
        let (t4, _, _) = split_manifest(all, (8, 1, 1), 100).unwrap();
        assert_ne!(t1, t4);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut list = entries(5);
        list[3].video_id = list[1].video_id.clone();
        assert!(matches!(
            split_manifest(list, (8, 1, 1), 0).unwrap_err(),
            DataError::DuplicateVideoId { .. }
        ));
    }

    #[test]
    fn manifest_load_rejects_missing_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = DatasetManifest::new("train", entries(3)).unwrap();
        let path = dir.path().join("train.json");
        manifest.save(&path).unwrap();
        let err = DatasetManifest::load(&path).unwrap_err();
        assert!(matches!(err, DataError::MissingPath { .. }));
    }
}
