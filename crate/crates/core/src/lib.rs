//! Temporal localization of repurposable clips in long-form video.
//!
//! The crate trains and evaluates a joint classification/regression model
//! over per-second visual, audio and caption segment features: each segment
//! gets a selection probability per branch plus regressed distances to the
//! enclosing clip boundaries. Decoding thresholds the fused probabilities,
//! applies Gaussian soft-NMS and a duration-proportional top-k cut, and
//! scoring reports detection AP over a tIoU threshold grid.
//!
//! Layout:
//! - [`temporal`]: intervals, tIoU/GIoU, clip/label conversion
//! - [`engine`]: reverse-mode autodiff over dense `f64` matrices
//! - [`data`]: feature containers, manifests, caption alignment, synthetic corpora
//! - [`model`]: projections, attention encoder stacks, heads, checkpoints
//! - [`losses`]: focal, KL alignment and 1-D GIoU regression objectives
//! - [`train`]: warmup+cosine schedule, Adam, the training loop
//! - [`eval`]: decoding, soft-NMS, average precision, reports
//! - [`cli`]: the `repurpose` command implementations and run records

pub mod cli;
pub mod data;
pub mod engine;
pub mod eval;
pub mod losses;
pub mod model;
pub mod temporal;
pub mod train;

pub use temporal::{clips_to_labels, giou_1d, labels_to_clips, tiou, Interval, SegmentLabels, VideoSample};
