//! Domain types and 1-D interval algebra: intervals, tIoU/GIoU overlap
//! measures, and conversion between clip annotations and per-segment
//! training labels.

mod interval;
mod labels;
mod sample;

pub use interval::{giou_1d, tiou, Interval};
pub use labels::{clips_to_labels, labels_to_clips, segment_center, SegmentLabels};
pub use sample::VideoSample;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid interval [{start}, {end}]: end must exceed start and start must be >= 0")]
    InvalidInterval { start: f64, end: f64 },
    #[error("ground-truth clips [{a_start}, {a_end}] and [{b_start}, {b_end}] overlap")]
    OverlappingClips {
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },
    #[error("clip [{start}, {end}] exceeds the video range [0, {duration}]")]
    ClipOutOfRange { start: f64, end: f64, duration: f64 },
    #[error("invalid duration/segment length: duration={duration}, segment_length={segment_length}")]
    InvalidSegmentation { duration: f64, segment_length: f64 },
    #[error("segment labels are internally inconsistent: {reason}")]
    InconsistentLabels { reason: String },
    #[error("video sample invariant violated: {reason}")]
    InvalidSample { reason: String },
}
