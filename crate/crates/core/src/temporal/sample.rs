//! One long video with aligned per-segment features and its annotations.

use ndarray::Array2;

use super::{CoreError, Interval};

/// A video's aligned per-segment feature matrices plus ground truth.
///
/// `T = floor(duration / segment_length)` rows in each modality matrix.
/// `caption_empty[t]` marks segments with no transcribed speech; the model
/// substitutes its learned empty-token embedding for those rows.
#[derive(Debug, Clone)]
pub struct VideoSample {
    pub video_id: String,
    pub duration: f64,
    pub segment_length: f64,
    pub visual_features: Array2<f64>,
    pub audio_features: Array2<f64>,
    pub caption_features: Array2<f64>,
    pub caption_empty: Vec<bool>,
    pub clips: Vec<Interval>,
    pub caption_spans: Vec<(Interval, String)>,
}

impl VideoSample {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        video_id: String,
        duration: f64,
        segment_length: f64,
        visual_features: Array2<f64>,
        audio_features: Array2<f64>,
        caption_features: Array2<f64>,
        caption_empty: Vec<bool>,
        clips: Vec<Interval>,
        caption_spans: Vec<(Interval, String)>,
    ) -> Result<Self, CoreError> {
        if !(duration.is_finite() && duration > 0.0)
            || !(segment_length.is_finite() && segment_length > 0.0)
        {
            return Err(CoreError::InvalidSegmentation {
                duration,
                segment_length,
            });
        }
        let t_count = (duration / segment_length).floor() as usize;
        for (name, rows) in [
            ("visual", visual_features.nrows()),
            ("audio", audio_features.nrows()),
            ("caption", caption_features.nrows()),
        ] {
            if rows != t_count {
                return Err(CoreError::InvalidSample {
                    reason: format!(
                        "{name} features have {rows} rows but floor(duration/segment_length) = {t_count}"
                    ),
                });
            }
        }
        if caption_empty.len() != t_count {
            return Err(CoreError::InvalidSample {
                reason: format!(
                    "caption_empty has {} entries, expected {t_count}",
                    caption_empty.len()
                ),
            });
        }
        for clip in &clips {
            if clip.end() > duration + 1e-9 {
                return Err(CoreError::ClipOutOfRange {
                    start: clip.start(),
                    end: clip.end(),
                    duration,
                });
            }
        }
        Ok(Self {
            video_id,
            duration,
            segment_length,
            visual_features,
            audio_features,
            caption_features,
            caption_empty,
            clips,
            caption_spans,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.visual_features.nrows()
    }

    pub fn feature_dims(&self) -> (usize, usize, usize) {
        (
            self.visual_features.ncols(),
            self.audio_features.ncols(),
            self.caption_features.ncols(),
        )
    }
}
