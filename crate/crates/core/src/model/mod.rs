//! The baseline network: per-modality projections, self-attention encoders,
//! caption-enhancement cross-attention, audio-visual fusion, and the three
//! classification heads plus the boundary-offset regression head.

mod blocks;
mod checkpoint;
mod config;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_TAG};
pub use config::{ModalitySet, ModelConfig, ModelOutput};
pub use network::{Branch, EncodedMatrices, FeatureInput, ForwardMode, GraphOutputs, Model, ProjectedMatrices};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {reason}")]
    InvalidConfig { reason: String },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: String,
        expected: String,
        got: String,
    },
    #[error("padding mask has {mask_len} entries but the padded batch length is {padded_len}")]
    MaskMismatch { mask_len: usize, padded_len: usize },
    #[error("failed to write checkpoint: {0}")]
    CheckpointWrite(#[source] std::io::Error),
    #[error("failed to read checkpoint: {0}")]
    CheckpointRead(#[source] std::io::Error),
    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },
    #[error("unsupported checkpoint format tag {found:?}, expected {expected:?}")]
    UnsupportedFormat { found: String, expected: String },
    #[error("checkpoint/model config mismatch: {reason}")]
    ConfigMismatch { reason: String },
}
