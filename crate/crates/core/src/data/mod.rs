//! Data ingestion and generation: feature containers, annotation and
//! manifest schemas, caption-to-segment alignment, and the synthetic corpus
//! generator with planted cross-modal signal.

mod captions;
mod container;
mod load;
mod manifest;
mod synth;

pub use captions::{align_captions, CaptionSpan};
pub use container::{
    read_caption_empty, read_features, write_caption_empty, write_features, Modality,
};
pub use load::{load_manifest_videos, load_video, AnnotationFile, LoadMode, LoadOutcome};
pub use manifest::{split_manifest, DatasetManifest, ManifestEntry};
pub use synth::{generate_synthetic, linear_probe_accuracy, write_corpus, CorpusPaths, SyntheticConfig, SynthReport};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("caption span {text:?} has no embedding")]
    MissingEmbedding { text: String },
    #[error("caption span {text:?} embedding has {got} dims, expected {expected}")]
    EmbeddingDimMismatch {
        text: String,
        expected: usize,
        got: usize,
    },
    #[error("{modality} features have {rows} rows, expected {expected} (strict mode)")]
    ShapeMismatch {
        modality: String,
        rows: usize,
        expected: usize,
    },
    #[error("corrupt feature container {path}: {reason}")]
    CorruptContainer { path: PathBuf, reason: String },
    #[error("annotation/manifest schema error in {path}: {reason}")]
    SchemaError { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid synthetic config: {reason}")]
    InvalidConfig { reason: String },
    #[error("manifest needs at least 3 entries to split, got {got}")]
    TooFewEntries { got: usize },
    #[error("duplicate video id {id:?} in manifest")]
    DuplicateVideoId { id: String },
    #[error("manifest references missing path {path}")]
    MissingPath { path: PathBuf },
    #[error(transparent)]
    InvalidSample(#[from] crate::temporal::CoreError),
}

impl DataError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
        let path = path.into();
        move |source| DataError::Io { path, source }
    }
}
