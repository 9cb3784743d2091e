//! Conversion between clip annotations and per-segment training labels.

use super::{CoreError, Interval};

/// Per-segment training targets for one video.
///
/// `class_label[t]` says whether segment `t`'s center falls inside a
/// ground-truth clip; where it does, `start_offset[t]` / `end_offset[t]`
/// hold the distances (seconds) from the segment center to the enclosing
/// clip's boundaries. Negative segments carry zero offsets and
/// `valid_regression = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLabels {
    class_label: Vec<bool>,
    start_offset: Vec<f64>,
    end_offset: Vec<f64>,
    valid_regression: Vec<bool>,
}

impl SegmentLabels {
    pub fn new(
        class_label: Vec<bool>,
        start_offset: Vec<f64>,
        end_offset: Vec<f64>,
        valid_regression: Vec<bool>,
    ) -> Result<Self, CoreError> {
        let t = class_label.len();
        if start_offset.len() != t || end_offset.len() != t || valid_regression.len() != t {
            return Err(CoreError::InconsistentLabels {
                reason: format!(
                    "vector lengths differ: class {} start {} end {} valid {}",
                    t,
                    start_offset.len(),
                    end_offset.len(),
                    valid_regression.len()
                ),
            });
        }
        for i in 0..t {
            if class_label[i] != valid_regression[i] {
                return Err(CoreError::InconsistentLabels {
                    reason: format!("segment {i}: valid_regression must equal class_label"),
                });
            }
            if class_label[i] {
                if start_offset[i] < 0.0 || end_offset[i] < 0.0 {
                    return Err(CoreError::InconsistentLabels {
                        reason: format!("segment {i}: negative offset on a positive segment"),
                    });
                }
            } else if start_offset[i] != 0.0 || end_offset[i] != 0.0 {
                return Err(CoreError::InconsistentLabels {
                    reason: format!("segment {i}: nonzero offsets on a negative segment"),
                });
            }
        }
        Ok(Self {
            class_label,
            start_offset,
            end_offset,
            valid_regression,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.class_label.len()
    }

    pub fn class_label(&self) -> &[bool] {
        &self.class_label
    }

    pub fn start_offset(&self) -> &[f64] {
        &self.start_offset
    }

    pub fn end_offset(&self) -> &[f64] {
        &self.end_offset
    }

    pub fn valid_regression(&self) -> &[bool] {
        &self.valid_regression
    }

    pub fn num_positive(&self) -> usize {
        self.class_label.iter().filter(|&&c| c).count()
    }
}

/// Timestamp used for segment `t`: the segment center `(t + 0.5) * segment_length`.
///
/// Using the center keeps both offsets strictly positive on every positive
/// segment, so the regression target never collapses to zero length at a
/// clip edge.
pub fn segment_center(t: usize, segment_length: f64) -> f64 {
    (t as f64 + 0.5) * segment_length
}

/// Labels every segment of a `duration`-second video against a set of
/// non-overlapping ground-truth clips.
///
/// Segment `t` is positive iff its center lies in `[clip.start, clip.end)`
/// for some clip (half-open, so touching clips partition cleanly). The
/// clip set is rejected, not merged, when two clips overlap.
pub fn clips_to_labels(
    clips: &[Interval],
    duration: f64,
    segment_length: f64,
) -> Result<SegmentLabels, CoreError> {
    if !(duration.is_finite() && duration > 0.0)
        || !(segment_length.is_finite() && segment_length > 0.0)
    {
        return Err(CoreError::InvalidSegmentation {
            duration,
            segment_length,
        });
    }
    let mut sorted: Vec<&Interval> = clips.iter().collect();
    sorted.sort_by(|a, b| a.start().total_cmp(&b.start()));
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(CoreError::OverlappingClips {
                a_start: pair[0].start(),
                a_end: pair[0].end(),
                b_start: pair[1].start(),
                b_end: pair[1].end(),
            });
        }
    }
    for clip in &sorted {
        if clip.end() > duration + 1e-9 {
            return Err(CoreError::ClipOutOfRange {
                start: clip.start(),
                end: clip.end(),
                duration,
            });
        }
    }

    let t_count = (duration / segment_length).floor() as usize;
    let mut class_label = vec![false; t_count];
    let mut start_offset = vec![0.0; t_count];
    let mut end_offset = vec![0.0; t_count];

    let mut clip_idx = 0;
    for t in 0..t_count {
        let tau = segment_center(t, segment_length);
        while clip_idx < sorted.len() && sorted[clip_idx].end() <= tau {
            clip_idx += 1;
        }
        if let Some(clip) = sorted.get(clip_idx) {
            if clip.contains(tau) {
                class_label[t] = true;
                start_offset[t] = tau - clip.start();
                end_offset[t] = clip.end() - tau;
            }
        }
    }

    let valid_regression = class_label.clone();
    SegmentLabels::new(class_label, start_offset, end_offset, valid_regression)
}

/// Reconstructs the clip set implied by per-segment labels.
///
/// Each maximal run of positive segments is split wherever consecutive
/// segments imply clip boundaries more than `segment_length / 2` apart
/// (touching clips produce one contiguous run), and each group is rebuilt
/// from its first member's offsets. A group whose members drift more than
/// `segment_length` from the first member's implied boundary is rejected.
pub fn labels_to_clips(
    labels: &SegmentLabels,
    segment_length: f64,
) -> Result<Vec<Interval>, CoreError> {
    if !(segment_length.is_finite() && segment_length > 0.0) {
        return Err(CoreError::InvalidSegmentation {
            duration: f64::NAN,
            segment_length,
        });
    }
    let split_tol = 0.5 * segment_length;

    let mut clips = Vec::new();
    let mut group: Option<(f64, f64, f64, f64)> = None; // (first_start, first_end, prev_start, prev_end)

    let finalize = |g: &Option<(f64, f64, f64, f64)>| -> Result<Option<Interval>, CoreError> {
        match g {
            None => Ok(None),
            Some((s, e, _, _)) => {
                let interval = Interval::new(s.max(0.0), *e).map_err(|_| {
                    CoreError::InconsistentLabels {
                        reason: format!("implied clip [{s}, {e}] has non-positive length"),
                    }
                })?;
                Ok(Some(interval))
            }
        }
    };

    for t in 0..labels.num_segments() {
        if !labels.class_label()[t] {
            if let Some(clip) = finalize(&group)? {
                clips.push(clip);
            }
            group = None;
            continue;
        }
        let tau = segment_center(t, segment_length);
        let implied_start = tau - labels.start_offset()[t];
        let implied_end = tau + labels.end_offset()[t];
        match group {
            None => group = Some((implied_start, implied_end, implied_start, implied_end)),
            Some((first_s, first_e, prev_s, prev_e)) => {
                let jump = (implied_start - prev_s).abs().max((implied_end - prev_e).abs());
                if jump > split_tol {
                    // a new clip starts inside this positive run
                    if let Some(clip) = finalize(&group)? {
                        clips.push(clip);
                    }
                    group = Some((implied_start, implied_end, implied_start, implied_end));
                } else {
                    let drift =
                        (implied_start - first_s).abs().max((implied_end - first_e).abs());
                    if drift > segment_length {
                        return Err(CoreError::InconsistentLabels {
                            reason: format!(
                                "segment {t} implies boundary [{implied_start}, {implied_end}] \
                                 which drifts {drift:.3}s from the run's first member"
                            ),
                        });
                    }
                    group = Some((first_s, first_e, implied_start, implied_end));
                }
            }
        }
    }
    if let Some(clip) = finalize(&group)? {
        clips.push(clip);
    }
    clips.sort_by(|a, b| a.start().total_cmp(&b.start()));
    Ok(clips)
}
