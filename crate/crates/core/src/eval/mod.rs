//! Decoding per-segment outputs into scored clip predictions, Gaussian
//! soft-NMS, duration-proportional top-k truncation, and detection AP over
//! a tIoU threshold grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError, ModelOutput};
use crate::temporal::{segment_center, tiou, Interval, VideoSample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions reference video {video_id:?} which has no ground-truth entry")]
    VideoIdMismatch { video_id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One decoded candidate clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub interval: Interval,
    pub score: f64,
    /// Segment index the candidate was decoded from.
    pub source_segment: usize,
}

/// Decoding and scoring constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub conf_threshold: f64,
    pub nms_sigma: f64,
    pub score_floor: f64,
    pub tiou_thresholds: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            conf_threshold: 0.5,
            nms_sigma: 0.5,
            score_floor: 1e-3,
            tiou_thresholds: vec![0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }
}

/// Emits one candidate interval per segment whose fused probability clears
/// the confidence threshold: `[tau - d_s, tau + d_e]` clamped to the video,
/// scored by the fused probability. Zero-length candidates are dropped.
pub fn decode(
    output: &ModelOutput,
    segment_length: f64,
    duration: f64,
    conf_threshold: f64,
) -> Vec<ClipPrediction> {
    let mut out = Vec::new();
    for t in 0..output.num_segments() {
        let score = output.prob_fused[t];
        if score < conf_threshold {
            continue;
        }
        let tau = segment_center(t, segment_length);
        let start = (tau - output.start_offset_pred[t]).clamp(0.0, duration);
        let end = (tau + output.end_offset_pred[t]).clamp(0.0, duration);
        if end <= start {
            continue;
        }
        out.push(ClipPrediction {
            interval: Interval::new(start, end).expect("clamped candidate is valid"),
            score,
            source_segment: t,
        });
    }
    out
}

/// Collapses candidates with bit-identical intervals, keeping the maximal
/// score (and the smallest source segment for determinism). Run before
/// soft-NMS so duplicates cannot suppress each other.
pub fn merge_duplicate_candidates(candidates: Vec<ClipPrediction>) -> Vec<ClipPrediction> {
    let mut merged: Vec<ClipPrediction> = Vec::with_capacity(candidates.len());
    for cand in candidates {
        match merged.iter_mut().find(|m| {
            m.interval.start().to_bits() == cand.interval.start().to_bits()
                && m.interval.end().to_bits() == cand.interval.end().to_bits()
        }) {
            Some(existing) => {
                if cand.score > existing.score {
                    existing.score = cand.score;
                }
                existing.source_segment = existing.source_segment.min(cand.source_segment);
            }
            None => merged.push(cand),
        }
    }
    merged
}

/// Gaussian soft-NMS: iteratively take the highest-scoring remaining
/// candidate, decay every other candidate by `exp(-tiou^2 / sigma)`, and
/// drop candidates falling below `score_floor`. Ties break to the earlier
/// start, then the lower source segment. Output is sorted by final score
/// descending.
pub fn soft_nms(
    candidates: Vec<ClipPrediction>,
    sigma: f64,
    score_floor: f64,
) -> Vec<ClipPrediction> {
    let mut remaining = candidates;
    let mut selected = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                b.score
                    .total_cmp(&a.score)
                    .then(a.interval.start().total_cmp(&b.interval.start()))
                    .then(a.source_segment.cmp(&b.source_segment))
            })
            .map(|(i, _)| i)
            .expect("non-empty");
        let pick = remaining.swap_remove(best);
        for other in &mut remaining {
            let overlap = tiou(&pick.interval, &other.interval);
            other.score *= (-(overlap * overlap) / sigma).exp();
        }
        remaining.retain(|c| c.score >= score_floor);
        selected.push(pick);
    }
    selected
}

/// Dynamic top-k: 3 clips per 10 minutes, rounded half-up, at least 1.
pub fn top_k_for_duration(duration: f64) -> usize {
    ((3.0 * duration / 600.0 + 0.5).floor() as usize).max(1)
}

/// Per-video prediction set for scoring.
#[derive(Debug, Clone)]
pub struct VideoPredictions {
    pub video_id: String,
    pub predictions: Vec<ClipPrediction>,
}

/// Per-video ground truth for scoring.
#[derive(Debug, Clone)]
pub struct VideoGroundTruth {
    pub video_id: String,
    pub clips: Vec<Interval>,
}

/// Detection AP at one tIoU threshold with a pooled score ranking.
///
/// Predictions from every video are ranked together by score (deterministic
/// tie-break by video id, start, source segment). Walking down the ranking,
/// each prediction is matched to the not-yet-consumed ground-truth clip in
/// its own video with maximal tIoU; the match is a true positive (and the
/// clip consumed) iff its tIoU clears the threshold. AP is the area under
/// the interpolated precision-recall curve (all-point interpolation).
pub fn average_precision(
    predictions: &[VideoPredictions],
    ground_truth: &[VideoGroundTruth],
    threshold: f64,
) -> Result<f64, EvalError> {
    let gt_index: std::collections::HashMap<&str, usize> = ground_truth
        .iter()
        .enumerate()
        .map(|(i, g)| (g.video_id.as_str(), i))
        .collect();
    let mut ranking: Vec<(usize, &VideoPredictions, &ClipPrediction)> = Vec::new();
    for preds in predictions {
        let &vid_idx = gt_index.get(preds.video_id.as_str()).ok_or_else(|| {
            EvalError::VideoIdMismatch {
                video_id: preds.video_id.clone(),
            }
        })?;
        for p in &preds.predictions {
            ranking.push((vid_idx, preds, p));
        }
    }
    let total_gt: usize = ground_truth.iter().map(|g| g.clips.len()).sum();
    if ranking.is_empty() || total_gt == 0 {
        return Ok(0.0);
    }

    ranking.sort_by(|(_, va, a), (_, vb, b)| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| va.video_id.cmp(&vb.video_id))
            .then(a.interval.start().total_cmp(&b.interval.start()))
            .then(a.source_segment.cmp(&b.source_segment))
    });

    let mut consumed: Vec<Vec<bool>> = ground_truth
        .iter()
        .map(|g| vec![false; g.clips.len()])
        .collect();
    let mut is_tp = Vec::with_capacity(ranking.len());
    for (vid_idx, _, pred) in &ranking {
        let clips = &ground_truth[*vid_idx].clips;
        let mut best: Option<(f64, usize)> = None;
        for (gi, clip) in clips.iter().enumerate() {
            if consumed[*vid_idx][gi] {
                continue;
            }
            let overlap = tiou(&pred.interval, clip);
            if best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, gi));
            }
        }
        match best {
            Some((overlap, gi)) if overlap >= threshold => {
                consumed[*vid_idx][gi] = true;
                is_tp.push(true);
            }
            _ => is_tp.push(false),
        }
    }

    // precision/recall along the ranking, then the right-to-left precision
    // envelope integrated over recall increments
    let n = is_tp.len();
    let mut precisions = Vec::with_capacity(n);
    let mut recalls = Vec::with_capacity(n);
    let mut tp_cum = 0usize;
    for (k, &tp) in is_tp.iter().enumerate() {
        if tp {
            tp_cum += 1;
        }
        precisions.push(tp_cum as f64 / (k + 1) as f64);
        recalls.push(tp_cum as f64 / total_gt as f64);
    }
    let mut envelope = precisions.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..n {
        if recalls[k] > prev_recall {
            ap += (recalls[k] - prev_recall) * envelope[k];
            prev_recall = recalls[k];
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerVideoDiag {
    pub video_id: String,
    pub num_predictions: usize,
    pub num_gt: usize,
    /// Best tIoU any retained prediction achieves against each GT clip.
    pub best_tiou_per_gt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_per_threshold: Vec<ThresholdAp>,
    pub average: f64,
    pub per_video: Vec<PerVideoDiag>,
}

impl EvalReport {
    /// Plain-text table, thresholds across the columns, percentages.
    pub fn render_table(&self) -> String {
        let mut header = String::from("tIoU   ");
        let mut row = String::from("AP     ");
        for t in &self.ap_per_threshold {
            header.push_str(&format!("{:>8.1}", t.threshold));
            row.push_str(&format!("{:>8.2}", t.ap * 100.0));
        }
        header.push_str(&format!("{:>8}", "Avg."));
        row.push_str(&format!("{:>8.2}", self.average * 100.0));
        format!("{header}\n{row}\n")
    }
}

/// Scores already-computed model outputs: decode, merge duplicates,
/// soft-NMS, top-k truncation, then AP at every threshold.
pub fn evaluate_outputs(
    videos: &[(String, f64, ModelOutput)],
    ground_truth: &[VideoGroundTruth],
    segment_length: f64,
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    let mut predictions = Vec::with_capacity(videos.len());
    for (video_id, duration, output) in videos {
        let candidates = decode(output, segment_length, *duration, params.conf_threshold);
        let candidates = merge_duplicate_candidates(candidates);
        let mut kept = soft_nms(candidates, params.nms_sigma, params.score_floor);
        kept.truncate(top_k_for_duration(*duration));
        predictions.push(VideoPredictions {
            video_id: video_id.clone(),
            predictions: kept,
        });
    }

    let mut ap_per_threshold = Vec::with_capacity(params.tiou_thresholds.len());
    for &threshold in &params.tiou_thresholds {
        ap_per_threshold.push(ThresholdAp {
            threshold,
            ap: average_precision(&predictions, ground_truth, threshold)?,
        });
    }
    let average = ap_per_threshold.iter().map(|t| t.ap).sum::<f64>()
        / ap_per_threshold.len().max(1) as f64;

    let per_video = predictions
        .iter()
        .zip(ground_truth)
        .map(|(preds, gt)| PerVideoDiag {
            video_id: preds.video_id.clone(),
            num_predictions: preds.predictions.len(),
            num_gt: gt.clips.len(),
            best_tiou_per_gt: gt
                .clips
                .iter()
                .map(|clip| {
                    preds
                        .predictions
                        .iter()
                        .map(|p| tiou(&p.interval, clip))
                        .fold(0.0, f64::max)
                })
                .collect(),
        })
        .collect();

    Ok(EvalReport {
        ap_per_threshold,
        average,
        per_video,
    })
}

/// Full evaluation of a model over a set of videos (deterministic order by
/// video id).
pub fn evaluate_model(
    model: &Model,
    videos: &[VideoSample],
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    let mut ordered: Vec<&VideoSample> = videos.iter().collect();
    ordered.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let mut outputs = Vec::with_capacity(ordered.len());
    let mut ground_truth = Vec::with_capacity(ordered.len());
    let segment_length = ordered.first().map_or(1.0, |v| v.segment_length);
    for video in ordered {
        let output = model.forward_single(video)?;
        outputs.push((video.video_id.clone(), video.duration, output));
        ground_truth.push(VideoGroundTruth {
            video_id: video.video_id.clone(),
            clips: video.clips.clone(),
        });
    }
    evaluate_outputs(&outputs, &ground_truth, segment_length, params)
}

/// Oracle outputs for a labeled video: probability 1 on positive segments
/// with exact offsets. Decoding these must reproduce the ground truth.
pub fn oracle_output(labels: &crate::temporal::SegmentLabels) -> ModelOutput {
    ModelOutput {
        prob_visual: None,
        prob_audio: None,
        prob_fused: labels
            .class_label()
            .iter()
            .map(|&c| f64::from(c))
            .collect(),
        start_offset_pred: labels.start_offset().to_vec(),
        end_offset_pred: labels.end_offset().to_vec(),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::temporal::clips_to_labels;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn decode_filters_below_threshold() {
        let out = ModelOutput {
            prob_visual: None,
            prob_audio: None,
            prob_fused: vec![0.4, 0.49, 0.2],
            start_offset_pred: vec![1.0; 3],
            end_offset_pred: vec![1.0; 3],
        };
        assert!(decode(&out, 1.0, 3.0, 0.5).is_empty());
    }

    #[test]
    fn decode_worked_example() {
        // tau = 30.5, offsets (20.5, 39.5), score 0.9 -> [10, 70]
        let t = 60;
        let mut out = ModelOutput {
            prob_visual: None,
            prob_audio: None,
            prob_fused: vec![0.0; t],
            start_offset_pred: vec![0.0; t],
            end_offset_pred: vec![0.0; t],
        };
        out.prob_fused[30] = 0.9;
        out.start_offset_pred[30] = 20.5;
        out.end_offset_pred[30] = 39.5;
        let cands = decode(&out, 1.0, 100.0, 0.5);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].interval.start(), 10.0);
        assert_eq!(cands[0].interval.end(), 70.0);
        assert_eq!(cands[0].score, 0.9);
        assert_eq!(cands[0].source_segment, 30);
    }

    #[test]
    fn decode_clamps_to_video_bounds() {
        let out = ModelOutput {
            prob_visual: None,
            prob_audio: None,
            prob_fused: vec![0.9],
            start_offset_pred: vec![10.0], // exceeds tau = 0.5
            end_offset_pred: vec![100.0],  // exceeds duration
        };
        let cands = decode(&out, 1.0, 30.0, 0.5);
        assert_eq!(cands[0].interval.start(), 0.0);
        assert_eq!(cands[0].interval.end(), 30.0);
    }

    #[test]
    fn decode_drops_zero_length_candidates() {
        let out = ModelOutput {
            prob_visual: None,
            prob_audio: None,
            prob_fused: vec![0.9],
            start_offset_pred: vec![0.0],
            end_offset_pred: vec![0.0],
        };
        assert!(decode(&out, 1.0, 30.0, 0.5).is_empty());
    }

    #[test]
    fn duplicates_merge_keeping_max_score() {
        let merged = merge_duplicate_candidates(vec![
            pred(0.0, 10.0, 0.7, 3),
            pred(0.0, 10.0, 0.9, 5),
            pred(5.0, 15.0, 0.6, 8),
        ]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].score, 0.9);
        assert_eq!(merged[0].source_segment, 3);
    }

    #[test]
    fn soft_nms_keeps_disjoint_candidates_untouched() {
        let out = soft_nms(
            vec![pred(0.0, 10.0, 0.9, 0), pred(20.0, 30.0, 0.8, 1)],
            0.5,
            1e-3,
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score, 0.9);
        assert_eq!(out[1].score, 0.8);
    }

    #[test]
    fn soft_nms_gaussian_decay_closed_form() {
        // mutual tiou 0.6 at sigma 0.5 decays 0.8 by e^(-0.72)
        let a = pred(0.0, 10.0, 0.9, 0);
        let b = pred(2.5, 12.5, 0.8, 1); // tiou = 7.5 / 12.5 = 0.6
        assert!((tiou(&a.interval, &b.interval) - 0.6).abs() < 1e-12);
        let out = soft_nms(vec![a, b], 0.5, 1e-3);
        let expected = 0.8 * (-0.72f64).exp();
        assert!(
            (out[1].score - expected).abs() < 1e-9,
            "{} vs {expected}",
            out[1].score
        );
    }

    #[test]
    fn soft_nms_single_candidate_unchanged() {
        let out = soft_nms(vec![pred(0.0, 5.0, 0.42, 7)], 0.5, 1e-3);
        assert_eq!(out, vec![pred(0.0, 5.0, 0.42, 7)]);
    }

    #[test]
    fn soft_nms_never_raises_scores_and_keeps_top1() {
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let cands: Vec<ClipPrediction> = (0..n)
                .map(|i| {
                    let s = rng.random_range(0.0..50.0);
                    let len = rng.random_range(1.0..20.0);
                    pred(s, s + len, rng.random_range(0.01..1.0), i)
                })
                .collect();
            let top1 = cands
                .iter()
                .cloned()
                .min_by(|a, b| {
                    b.score
                        .total_cmp(&a.score)
                        .then(a.interval.start().total_cmp(&b.interval.start()))
                })
                .unwrap();
            let before: std::collections::HashMap<usize, f64> =
                cands.iter().map(|c| (c.source_segment, c.score)).collect();
            let out = soft_nms(cands, 0.5, 1e-3);
            assert_eq!(out[0], top1, "top-1 candidate must survive unchanged");
            for c in &out {
                assert!(c.score <= before[&c.source_segment] + 1e-15);
            }
            for w in out.windows(2) {
                assert!(w[0].score >= w[1].score, "output not sorted by score");
            }
        }
    }

    #[test]
    fn soft_nms_converges_to_hard_nms_for_tiny_sigma() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.random_range(1..10);
            // snapped intervals so overlaps are either 0 or substantial
            let cands: Vec<ClipPrediction> = (0..n)
                .map(|i| {
                    let s = rng.random_range(0..20) as f64 * 5.0;
                    let len = rng.random_range(1..5) as f64 * 5.0;
                    pred(s, s + len, rng.random_range(0.01..1.0), i)
                })
                .collect();

            let soft = soft_nms(cands.clone(), 1e-6, 1e-3);

            // hard NMS reference: greedily keep the max, drop any positive overlap
            let mut remaining = cands;
            let mut hard = Vec::new();
            while !remaining.is_empty() {
                let best = remaining
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        b.score
                            .total_cmp(&a.score)
                            .then(a.interval.start().total_cmp(&b.interval.start()))
                            .then(a.source_segment.cmp(&b.source_segment))
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                let pick = remaining.swap_remove(best);
                remaining.retain(|c| tiou(&pick.interval, &c.interval) == 0.0);
                hard.push(pick);
            }
            assert_eq!(soft, hard, "sigma -> 0 must reduce to hard NMS");
        }
    }

    #[test]
    fn top_k_follows_duration() {
        assert_eq!(top_k_for_duration(600.0), 3);
        assert_eq!(top_k_for_duration(1200.0), 6);
        assert_eq!(top_k_for_duration(300.0), 2); // 1.5 rounds half-up
        assert_eq!(top_k_for_duration(30.0), 1); // floor at one
    }

    fn single_video(
        preds: Vec<ClipPrediction>,
        gts: Vec<Interval>,
    ) -> (Vec<VideoPredictions>, Vec<VideoGroundTruth>) {
        (
            vec![VideoPredictions {
                video_id: "v".into(),
                predictions: preds,
            }],
            vec![VideoGroundTruth {
                video_id: "v".into(),
                clips: gts,
            }],
        )
    }

    #[test]
    fn ap_perfect_detector_scores_one() {
        let (p, g) = single_video(
            vec![pred(0.0, 10.0, 0.9, 0), pred(20.0, 30.0, 0.8, 1)],
            vec![iv(0.0, 10.0), iv(20.0, 30.0)],
        );
        for thr in [0.5, 0.7, 0.9, 1.0] {
            assert_eq!(average_precision(&p, &g, thr).unwrap(), 1.0);
        }
    }

    #[test]
    fn ap_no_predictions_scores_zero() {
        let (p, g) = single_video(vec![], vec![iv(0.0, 10.0)]);
        assert_eq!(average_precision(&p, &g, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ap_predictions_without_ground_truth_score_zero() {
        let (p, g) = single_video(vec![pred(0.0, 10.0, 0.9, 0)], vec![]);
        assert_eq!(average_precision(&p, &g, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ap_rank_example_scores_half() {
        // rank-1 misses (tiou 1/3), rank-2 hits (tiou 0.8): AP = 0.5
        let gt = iv(0.0, 10.0);
        let bad = iv(0.0, 30.0);
        let good = iv(0.0, 8.0);
        assert!((tiou(&bad, &gt) - 1.0 / 3.0).abs() < 1e-12);
        assert!((tiou(&good, &gt) - 0.8).abs() < 1e-12);
        let (p, g) = single_video(
            vec![
                ClipPrediction {
                    interval: bad,
                    score: 0.9,
                    source_segment: 0,
                },
                ClipPrediction {
                    interval: good,
                    score: 0.8,
                    source_segment: 1,
                },
            ],
            vec![gt],
        );
        let ap = average_precision(&p, &g, 0.5).unwrap();
        assert!((ap - 0.5).abs() < 1e-12, "got {ap}");
    }

    #[test]
    fn ap_unknown_video_id_is_rejected() {
        let p = vec![VideoPredictions {
            video_id: "ghost".into(),
            predictions: vec![pred(0.0, 5.0, 0.5, 0)],
        }];
        let g = vec![VideoGroundTruth {
            video_id: "v".into(),
            clips: vec![iv(0.0, 5.0)],
        }];
        assert!(matches!(
            average_precision(&p, &g, 0.5).unwrap_err(),
            EvalError::VideoIdMismatch { .. }
        ));
    }

    #[test]
    fn ap_matches_bruteforce_oracle_on_random_corpora() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..500 {
            let (p, g) = random_corpus(&mut rng);
            for thr in [0.3, 0.5, 0.7, 0.9] {
                let fast = average_precision(&p, &g, thr).unwrap();
                let slow = ap_bruteforce(&p, &g, thr);
                assert!(
                    (fast - slow).abs() < 1e-9,
                    "AP mismatch at thr {thr}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn ap_monotone_in_threshold_stress() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for _ in 0..3000 {
            let (p, g) = random_corpus(&mut rng);
            let mut last = f64::INFINITY;
            for thr in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let ap = average_precision(&p, &g, thr).unwrap();
                assert!(
                    ap <= last + 1e-12,
                    "AP rose from {last} to {ap} as threshold tightened to {thr}"
                );
                last = ap;
            }
        }
    }

    #[test]
    fn oracle_labels_through_pipeline_reach_ap_one() {
        // duration 500s gives top-k = 3, enough room for both clips
        let clips = vec![iv(10.0, 35.0), iv(60.0, 90.0)];
        let labels = clips_to_labels(&clips, 500.0, 1.0).unwrap();
        let output = oracle_output(&labels);
        let report = evaluate_outputs(
            &[("v".into(), 500.0, output)],
            &[VideoGroundTruth {
                video_id: "v".into(),
                clips,
            }],
            1.0,
            &EvalParams::default(),
        )
        .unwrap();
        for t in &report.ap_per_threshold {
            assert_eq!(t.ap, 1.0, "AP at {} fell below 1", t.threshold);
        }
        assert_eq!(report.average, 1.0);
        assert_eq!(report.per_video[0].num_gt, 2);
        assert!(report.per_video[0]
            .best_tiou_per_gt
            .iter()
            .all(|&t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn report_average_is_the_mean_of_thresholds() {
        let mut rng = ChaCha20Rng::seed_from_u64(44);
        let (p, g) = random_corpus(&mut rng);
        let videos: Vec<(String, f64, ModelOutput)> = p
            .iter()
            .map(|vp| {
                // re-encode predictions as an output so evaluate_outputs runs
                // the whole pipeline
                let t = 100;
                let mut out = ModelOutput {
                    prob_visual: None,
                    prob_audio: None,
                    prob_fused: vec![0.0; t],
                    start_offset_pred: vec![0.0; t],
                    end_offset_pred: vec![0.0; t],
                };
                for (i, pr) in vp.predictions.iter().enumerate().take(t) {
                    out.prob_fused[i] = pr.score.max(0.51);
                    let tau = segment_center(i, 1.0);
                    out.start_offset_pred[i] = (tau - pr.interval.start()).max(0.0);
                    out.end_offset_pred[i] = (pr.interval.end() - tau).max(0.0);
                }
                (vp.video_id.clone(), 100.0, out)
            })
            .collect();
        let report = evaluate_outputs(&videos, &g, 1.0, &EvalParams::default()).unwrap();
        let manual: f64 = report.ap_per_threshold.iter().map(|t| t.ap).sum::<f64>() / 5.0;
        assert!((report.average - manual).abs() < 1e-12);
    }
}
