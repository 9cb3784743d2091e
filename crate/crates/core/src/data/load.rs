//! Annotation schema and the video loader joining features + annotations
//! into validated [`VideoSample`]s.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use super::{container, DataError, Modality};
use crate::temporal::{Interval, VideoSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionAnnotation {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

/// The on-disk annotation JSON for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub video_id: String,
    pub duration: f64,
    pub clips: Vec<ClipAnnotation>,
    pub captions: Vec<CaptionAnnotation>,
}

impl AnnotationFile {
    pub fn from_sample(sample: &VideoSample) -> Self {
        Self {
            video_id: sample.video_id.clone(),
            duration: sample.duration,
            clips: sample
                .clips
                .iter()
                .map(|c| ClipAnnotation {
                    start: c.start(),
                    end: c.end(),
                })
                .collect(),
            captions: sample
                .caption_spans
                .iter()
                .map(|(i, text)| CaptionAnnotation {
                    start: i.start(),
                    end: i.end(),
                    text: text.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(DataError::io(parent))?;
        }
        let body = serde_json::to_vec_pretty(self).expect("annotation serializes");
        fs::write(path, body).map_err(DataError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(DataError::io(path))?;
        serde_json::from_slice(&bytes).map_err(|e| DataError::SchemaError {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Row-count policy when a feature matrix disagrees with
/// `floor(duration / segment_length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Any mismatch is an error.
    Strict,
    /// Extra rows are truncated (with a recorded warning); missing rows are
    /// still an error.
    Lenient,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub sample: VideoSample,
    pub warnings: Vec<String>,
}

/// Loads one manifest entry into a validated sample.
pub fn load_video(
    entry: &ManifestEntry,
    base_dir: &Path,
    segment_length: f64,
    mode: LoadMode,
) -> Result<LoadOutcome, DataError> {
    let ann_path = base_dir.join(&entry.annotation_path);
    let annotation = AnnotationFile::load(&ann_path)?;
    let mut warnings = Vec::new();

    if annotation.video_id != entry.video_id {
        return Err(DataError::SchemaError {
            path: ann_path.clone(),
            reason: format!(
                "annotation video_id {:?} does not match manifest entry {:?}",
                annotation.video_id, entry.video_id
            ),
        });
    }
    if (annotation.duration - entry.duration).abs() > 1e-6 {
        warnings.push(format!(
            "duration mismatch: manifest {} vs annotation {}",
            entry.duration, annotation.duration
        ));
    }

    let t_count = (annotation.duration / segment_length).floor() as usize;
    let feature_dir = base_dir.join(&entry.feature_path);

    let mut fix_rows = |m: Array2<f64>, modality: Modality| -> Result<Array2<f64>, DataError> {
        let rows = m.nrows();
        if rows == t_count {
            return Ok(m);
        }
        if rows > t_count && mode == LoadMode::Lenient {
            warnings.push(format!(
                "{} features truncated from {rows} to {t_count} rows",
                modality.name()
            ));
            return Ok(m.slice(ndarray::s![..t_count, ..]).to_owned());
        }
        Err(DataError::ShapeMismatch {
            modality: modality.name().into(),
            rows,
            expected: t_count,
        })
    };

    let visual = fix_rows(container::read_features(&feature_dir, Modality::Visual)?, Modality::Visual)?;
    let audio = fix_rows(container::read_features(&feature_dir, Modality::Audio)?, Modality::Audio)?;
    let caption = fix_rows(
        container::read_features(&feature_dir, Modality::Caption)?,
        Modality::Caption,
    )?;

    let caption_empty = match container::read_caption_empty(&feature_dir)? {
        None => vec![false; t_count],
        Some(flags) if flags.len() == t_count => flags,
        Some(mut flags) => {
            if mode == LoadMode::Strict {
                return Err(DataError::ShapeMismatch {
                    modality: "caption_empty".into(),
                    rows: flags.len(),
                    expected: t_count,
                });
            }
            warnings.push(format!(
                "caption_empty flags resized from {} to {t_count}",
                flags.len()
            ));
            flags.resize(t_count, false);
            flags
        }
    };

    let mut clips = Vec::with_capacity(annotation.clips.len());
    for c in &annotation.clips {
        clips.push(Interval::new(c.start, c.end).map_err(|e| DataError::SchemaError {
            path: ann_path.clone(),
            reason: format!("invalid clip: {e}"),
        })?);
    }
    let mut caption_spans = Vec::with_capacity(annotation.captions.len());
    for c in &annotation.captions {
        let interval = Interval::new(c.start, c.end).map_err(|e| DataError::SchemaError {
            path: ann_path.clone(),
            reason: format!("invalid caption span: {e}"),
        })?;
        caption_spans.push((interval, c.text.clone()));
    }

    let sample = VideoSample::new(
        entry.video_id.clone(),
        annotation.duration,
        segment_length,
        visual,
        audio,
        caption,
        caption_empty,
        clips,
        caption_spans,
    )?;
    Ok(LoadOutcome { sample, warnings })
}

/// Loads every entry of a manifest file, resolving paths relative to it.
pub fn load_manifest_videos(
    manifest_path: &Path,
    segment_length: f64,
    mode: LoadMode,
) -> Result<Vec<LoadOutcome>, DataError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .entries
        .iter()
        .map(|entry| load_video(entry, base, segment_length, mode))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, write_corpus, SyntheticConfig};
    use crate::data::write_features;

    fn small_corpus(dir: &Path) -> (SyntheticConfig, super::super::CorpusPaths) {
        let cfg = SyntheticConfig {
            num_videos: 4,
            duration_range: (50.0, 80.0),
            clip_density: 3.0,
            clip_duration_mean: 20.0,
            clip_duration_std: 3.0,
            signal_strength: 1.0,
            feature_dims: (5, 7, 3),
            seed: 17,
            segment_length: 1.0,
            ramp_segments: 3,
        };
        let (samples, _) = generate_synthetic(&cfg).unwrap();
        let paths = write_corpus(&samples, dir, (8, 1, 1), cfg.seed).unwrap();
        (cfg, paths)
    }

    #[test]
    fn well_formed_corpus_loads_with_expected_t() {
        let dir = tempfile::tempdir().unwrap();
        let (_, paths) = small_corpus(dir.path());
        let outcomes = load_manifest_videos(&paths.train_manifest, 1.0, LoadMode::Strict).unwrap();
        assert!(!outcomes.is_empty());
        for o in &outcomes {
            assert_eq!(
                o.sample.num_segments(),
                o.sample.duration.floor() as usize,
                "T must equal floor(duration)"
            );
            assert!(o.warnings.is_empty(), "unexpanded warnings: {:?}", o.warnings);
        }
    }

    #[test]
    fn short_feature_matrix_is_rejected_in_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let (_, paths) = small_corpus(dir.path());
        let manifest = DatasetManifest::load(&paths.train_manifest).unwrap();
        let entry = &manifest.entries[0];
        let base = paths.train_manifest.parent().unwrap();

        // chop one row off the visual features
        let feature_dir = base.join(&entry.feature_path);
        let m = container::read_features(&feature_dir, Modality::Visual).unwrap();
        let truncated = m.slice(ndarray::s![..m.nrows() - 1, ..]).to_owned();
        write_features(&feature_dir, Modality::Visual, &truncated).unwrap();

        for mode in [LoadMode::Strict, LoadMode::Lenient] {
            let err = load_video(entry, base, 1.0, mode).unwrap_err();
            assert!(matches!(err, DataError::ShapeMismatch { .. }), "{mode:?}");
        }
    }

    #[test]
    fn extra_rows_truncate_only_in_lenient_mode() {
        let dir = tempfile::tempdir().unwrap();
        let (_, paths) = small_corpus(dir.path());
        let manifest = DatasetManifest::load(&paths.train_manifest).unwrap();
        let entry = &manifest.entries[0];
        let base = paths.train_manifest.parent().unwrap();

        let feature_dir = base.join(&entry.feature_path);
        let m = container::read_features(&feature_dir, Modality::Visual).unwrap();
        let mut extended = Array2::zeros((m.nrows() + 2, m.ncols()));
        extended.slice_mut(ndarray::s![..m.nrows(), ..]).assign(&m);
        write_features(&feature_dir, Modality::Visual, &extended).unwrap();

        let err = load_video(entry, base, 1.0, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, DataError::ShapeMismatch { .. }));

        let outcome = load_video(entry, base, 1.0, LoadMode::Lenient).unwrap();
        assert_eq!(outcome.sample.num_segments(), m.nrows());
        assert_eq!(outcome.warnings.len(), 1, "truncation must be recorded");
        assert!(outcome.warnings[0].contains("truncated"));
    }

    #[test]
    fn corrupt_container_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (_, paths) = small_corpus(dir.path());
        let manifest = DatasetManifest::load(&paths.train_manifest).unwrap();
        let entry = &manifest.entries[0];
        let base = paths.train_manifest.parent().unwrap();
        let bin = base.join(&entry.feature_path).join("audio.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_video(entry, base, 1.0, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, DataError::CorruptContainer { .. }));
    }

    #[test]
    fn malformed_annotation_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let (_, paths) = small_corpus(dir.path());
        let manifest = DatasetManifest::load(&paths.train_manifest).unwrap();
        let entry = &manifest.entries[0];
        let base = paths.train_manifest.parent().unwrap();
        fs::write(base.join(&entry.annotation_path), b"{ not json").unwrap();
        let err = load_video(entry, base, 1.0, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, DataError::SchemaError { .. }));
    }
}
