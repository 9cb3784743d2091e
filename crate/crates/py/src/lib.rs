//! Python bindings over the core temporal-localization toolkit: interval
//! math, label conversion, decoding/soft-NMS, AP scoring, the lr schedule
//! and the synthetic corpus generator.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use repurpose_core::data::{generate_synthetic, write_corpus, SyntheticConfig};
use repurpose_core::eval::{
    self, ClipPrediction, EvalParams, VideoGroundTruth, VideoPredictions,
};
use repurpose_core::temporal::{self, Interval, SegmentLabels};
use repurpose_core::train;

/// `(start, end, score)` candidate tuples grouped per video id.
type ScoredByVideo = Vec<(String, Vec<(f64, f64, f64)>)>;
/// Per-video `(video_id, duration, candidates)` triples.
type ScoredWithDuration = Vec<(String, f64, Vec<(f64, f64, f64)>)>;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn interval(pair: (f64, f64)) -> PyResult<Interval> {
    Interval::new(pair.0, pair.1).map_err(value_err)
}

/// Temporal IoU of two `(start, end)` intervals.
#[pyfunction]
fn tiou(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    Ok(temporal::tiou(&interval(a)?, &interval(b)?))
}

/// 1-D generalized IoU of two `(start, end)` intervals.
#[pyfunction]
fn giou_1d(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    Ok(temporal::giou_1d(&interval(a)?, &interval(b)?))
}

/// Per-segment training labels for one video.
#[pyclass(name = "SegmentLabels", skip_from_py_object)]
#[derive(Clone)]
struct PySegmentLabels {
    inner: SegmentLabels,
}

#[pymethods]
impl PySegmentLabels {
    #[getter]
    fn class_label(&self) -> Vec<bool> {
        self.inner.class_label().to_vec()
    }

    #[getter]
    fn start_offset(&self) -> Vec<f64> {
        self.inner.start_offset().to_vec()
    }

    #[getter]
    fn end_offset(&self) -> Vec<f64> {
        self.inner.end_offset().to_vec()
    }

    #[getter]
    fn valid_regression(&self) -> Vec<bool> {
        self.inner.valid_regression().to_vec()
    }

    fn num_segments(&self) -> usize {
        self.inner.num_segments()
    }

    fn num_positive(&self) -> usize {
        self.inner.num_positive()
    }
}

/// Converts non-overlapping `(start, end)` clips into per-segment labels.
#[pyfunction]
fn clips_to_labels(
    clips: Vec<(f64, f64)>,
    duration: f64,
    segment_length: f64,
) -> PyResult<PySegmentLabels> {
    let clips: Vec<Interval> = clips
        .into_iter()
        .map(interval)
        .collect::<PyResult<_>>()?;
    let labels =
        temporal::clips_to_labels(&clips, duration, segment_length).map_err(value_err)?;
    Ok(PySegmentLabels { inner: labels })
}

/// Reconstructs `(start, end)` clips from per-segment labels.
#[pyfunction]
fn labels_to_clips(labels: &PySegmentLabels, segment_length: f64) -> PyResult<Vec<(f64, f64)>> {
    let clips = temporal::labels_to_clips(&labels.inner, segment_length).map_err(value_err)?;
    Ok(clips.iter().map(|c| (c.start(), c.end())).collect())
}

/// Learning rate at one step of a warmup+cosine schedule.
#[pyfunction]
fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> PyResult<f64> {
    train::lr_at(step, total_steps, warmup_steps, base_lr).map_err(value_err)
}

fn to_predictions(cands: Vec<(f64, f64, f64)>) -> PyResult<Vec<ClipPrediction>> {
    cands
        .into_iter()
        .enumerate()
        .map(|(i, (s, e, score))| {
            Ok(ClipPrediction {
                interval: interval((s, e))?,
                score,
                source_segment: i,
            })
        })
        .collect()
}

/// Gaussian soft-NMS over `(start, end, score)` candidates.
#[pyfunction]
#[pyo3(signature = (candidates, sigma = 0.5, score_floor = 1e-3))]
fn soft_nms(
    candidates: Vec<(f64, f64, f64)>,
    sigma: f64,
    score_floor: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let kept = eval::soft_nms(to_predictions(candidates)?, sigma, score_floor);
    Ok(kept
        .iter()
        .map(|p| (p.interval.start(), p.interval.end(), p.score))
        .collect())
}

/// Clips retained per video: 3 per 10 minutes, rounded half-up, at least 1.
#[pyfunction]
fn top_k_for_duration(duration: f64) -> usize {
    eval::top_k_for_duration(duration)
}

/// Decodes per-segment probabilities and offsets into `(start, end, score)`
/// candidates (threshold, clamp, duplicate-merge; no NMS).
#[pyfunction]
#[pyo3(signature = (prob_fused, start_offsets, end_offsets, segment_length, duration, conf_threshold = 0.5))]
fn decode(
    prob_fused: Vec<f64>,
    start_offsets: Vec<f64>,
    end_offsets: Vec<f64>,
    segment_length: f64,
    duration: f64,
    conf_threshold: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    if prob_fused.len() != start_offsets.len() || prob_fused.len() != end_offsets.len() {
        return Err(PyValueError::new_err("probability/offset lengths differ"));
    }
    let output = repurpose_core::model::ModelOutput {
        prob_visual: None,
        prob_audio: None,
        prob_fused,
        start_offset_pred: start_offsets,
        end_offset_pred: end_offsets,
    };
    let cands = eval::decode(&output, segment_length, duration, conf_threshold);
    let merged = eval::merge_duplicate_candidates(cands);
    Ok(merged
        .iter()
        .map(|p| (p.interval.start(), p.interval.end(), p.score))
        .collect())
}

/// Pooled detection AP at one tIoU threshold. `predictions` maps video id
/// to `(start, end, score)` lists; `ground_truth` maps video id to
/// `(start, end)` lists.
#[pyfunction]
fn average_precision(
    predictions: ScoredByVideo,
    ground_truth: Vec<(String, Vec<(f64, f64)>)>,
    threshold: f64,
) -> PyResult<f64> {
    let preds: Vec<VideoPredictions> = predictions
        .into_iter()
        .map(|(video_id, cands)| {
            Ok(VideoPredictions {
                video_id,
                predictions: to_predictions(cands)?,
            })
        })
        .collect::<PyResult<_>>()?;
    let gts: Vec<VideoGroundTruth> = ground_truth
        .into_iter()
        .map(|(video_id, clips)| {
            Ok(VideoGroundTruth {
                video_id,
                clips: clips.into_iter().map(interval).collect::<PyResult<_>>()?,
            })
        })
        .collect::<PyResult<_>>()?;
    eval::average_precision(&preds, &gts, threshold).map_err(value_err)
}

/// Full scoring pipeline (decode, merge, soft-NMS, top-k, AP grid) over
/// already-decoded candidates; returns `(ap_per_threshold, average)`.
#[pyfunction]
fn evaluate_candidates(
    predictions: ScoredWithDuration,
    ground_truth: Vec<(String, Vec<(f64, f64)>)>,
) -> PyResult<(Vec<(f64, f64)>, f64)> {
    let params = EvalParams::default();
    let mut pooled = Vec::new();
    for (video_id, duration, cands) in predictions {
        let mut kept = eval::soft_nms(
            eval::merge_duplicate_candidates(to_predictions(cands)?),
            params.nms_sigma,
            params.score_floor,
        );
        kept.truncate(eval::top_k_for_duration(duration));
        pooled.push(VideoPredictions {
            video_id,
            predictions: kept,
        });
    }
    let gts: Vec<VideoGroundTruth> = ground_truth
        .into_iter()
        .map(|(video_id, clips)| {
            Ok(VideoGroundTruth {
                video_id,
                clips: clips.into_iter().map(interval).collect::<PyResult<_>>()?,
            })
        })
        .collect::<PyResult<_>>()?;
    let mut per_threshold = Vec::new();
    for &t in &params.tiou_thresholds {
        per_threshold.push((t, eval::average_precision(&pooled, &gts, t).map_err(value_err)?));
    }
    let avg = per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / per_threshold.len() as f64;
    Ok((per_threshold, avg))
}

/// Generates a synthetic corpus on disk from a JSON config string and
/// returns the corpus statistics as JSON.
#[pyfunction]
fn synth_corpus(out_dir: &str, config_json: &str) -> PyResult<String> {
    let config: SyntheticConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let (samples, report) = generate_synthetic(&config).map_err(value_err)?;
    write_corpus(&samples, Path::new(out_dir), (8, 1, 1), config.seed).map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn repurpose_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySegmentLabels>()?;
    m.add_function(wrap_pyfunction!(tiou, m)?)?;
    m.add_function(wrap_pyfunction!(giou_1d, m)?)?;
    m.add_function(wrap_pyfunction!(clips_to_labels, m)?)?;
    m.add_function(wrap_pyfunction!(labels_to_clips, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(soft_nms, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_for_duration, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    Ok(())
}
