//! Training objectives: binary focal losses on the three branch
//! probabilities, Bernoulli-KL alignment between branch and fused
//! predictions, and a 1-D GIoU loss on the regressed clip boundaries.
//!
//! Every loss exists twice: as a plain function of slices (used for
//! reporting and as the reference in tests) and as a graph builder that
//! assembles the same arithmetic on an [`crate::engine::Graph`] for training.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Graph, NodeId};
use crate::model::ModelOutput;
use crate::temporal::{segment_center, SegmentLabels};

/// Predicted intervals that collapse to a point are evaluated as intervals
/// of this length (seconds) so the GIoU stays well defined.
pub const DEGENERATE_INTERVAL_EPS: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model output is missing the {0} branch required by this loss")]
    MissingBranch(&'static str),
    #[error("invalid loss parameters: {reason}")]
    InvalidParams { reason: String },
}

/// Focal loss constants. The class-balance weight applies to positives as
/// `alpha` and to negatives as `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_gamma() -> f64 {
    2.0
}
fn default_alpha() -> f64 {
    0.25
}
fn default_epsilon() -> f64 {
    1e-7
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            alpha: default_alpha(),
            epsilon: default_epsilon(),
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.gamma < 0.0 {
            return Err(LossError::InvalidParams {
                reason: format!("gamma {} must be >= 0", self.gamma),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(LossError::InvalidParams {
                reason: format!("epsilon {} must lie in (0, 0.5)", self.epsilon),
            });
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LossError::InvalidParams {
                reason: format!("alpha {} must lie in [0, 1]", self.alpha),
            });
        }
        Ok(())
    }
}

/// Weights of the composite objective. JSON keys are `lambda1..lambda4` in
/// the order uni-focal, multi-focal, alignment, IoU regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    #[serde(rename = "lambda1", default = "default_lambda1")]
    pub uni_focal: f64,
    #[serde(rename = "lambda2", default = "default_lambda2")]
    pub multi_focal: f64,
    #[serde(rename = "lambda3", default = "default_lambda3")]
    pub alignment: f64,
    #[serde(rename = "lambda4", default = "default_lambda4")]
    pub iou: f64,
}

fn default_lambda1() -> f64 {
    0.1
}
fn default_lambda2() -> f64 {
    0.3
}
fn default_lambda3() -> f64 {
    0.1
}
fn default_lambda4() -> f64 {
    0.7
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            uni_focal: default_lambda1(),
            multi_focal: default_lambda2(),
            alignment: default_lambda3(),
            iou: default_lambda4(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [
            ("lambda1", self.uni_focal),
            ("lambda2", self.multi_focal),
            ("lambda3", self.alignment),
            ("lambda4", self.iou),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(LossError::InvalidParams {
                    reason: format!("{name} = {v} must be non-negative"),
                });
            }
        }
        Ok(())
    }
}

/// Unweighted per-term values plus the weighted total, as logged per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub uni_focal: f64,
    pub mul_focal: f64,
    pub kl: f64,
    pub iou: f64,
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), LossError> {
    if got != expected {
        return Err(LossError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Mean binary focal loss over segments.
///
/// Positive segments contribute `-alpha (1-p)^gamma ln p`, negatives
/// `-(1-alpha) p^gamma ln(1-p)`; probabilities are clamped to
/// `[eps, 1-eps]` first. Empty input yields 0.
pub fn focal_loss(probs: &[f64], targets: &[bool], params: &FocalParams) -> Result<f64, LossError> {
    check_len("targets", targets.len(), probs.len())?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&p, &c) in probs.iter().zip(targets) {
        let p = clamp_prob(p, params.epsilon);
        sum += if c {
            -params.alpha * (1.0 - p).powf(params.gamma) * p.ln()
        } else {
            -(1.0 - params.alpha) * p.powf(params.gamma) * (1.0 - p).ln()
        };
    }
    Ok(sum / probs.len() as f64)
}

/// Sum of the focal losses on the visual and audio branch probabilities.
pub fn uni_focal(
    output: &ModelOutput,
    labels: &SegmentLabels,
    params: &FocalParams,
) -> Result<f64, LossError> {
    let visual = output
        .prob_visual
        .as_deref()
        .ok_or(LossError::MissingBranch("visual"))?;
    let audio = output
        .prob_audio
        .as_deref()
        .ok_or(LossError::MissingBranch("audio"))?;
    Ok(focal_loss(visual, labels.class_label(), params)?
        + focal_loss(audio, labels.class_label(), params)?)
}

/// Mean Bernoulli KL divergence `KL(branch || fused)` over segments.
pub fn kl_alignment(
    branch_probs: &[f64],
    fused_probs: &[f64],
    epsilon: f64,
) -> Result<f64, LossError> {
    check_len("fused_probs", fused_probs.len(), branch_probs.len())?;
    if branch_probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&p, &q) in branch_probs.iter().zip(fused_probs) {
        let p = clamp_prob(p, epsilon);
        let q = clamp_prob(q, epsilon);
        sum += p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    Ok(sum / branch_probs.len() as f64)
}

fn giou_raw(ps: f64, pe: f64, gs: f64, ge: f64) -> f64 {
    let inter = (pe.min(ge) - ps.max(gs)).max(0.0);
    let union = (pe - ps) + (ge - gs) - inter;
    let hull = pe.max(ge) - ps.min(gs);
    inter / union - (hull - union) / hull
}

/// Mean `1 - GIoU` between predicted and ground-truth intervals, over
/// positive segments only. Segment `t` with center `tau` compares
/// `[tau - pred_start, tau + pred_end]` against the labeled interval;
/// videos with no positive segments contribute 0.
pub fn iou_regression_loss(
    pred_start: &[f64],
    pred_end: &[f64],
    labels: &SegmentLabels,
    segment_length: f64,
) -> Result<f64, LossError> {
    let t_count = labels.num_segments();
    check_len("pred_start", pred_start.len(), t_count)?;
    check_len("pred_end", pred_end.len(), t_count)?;

    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..t_count {
        if !labels.valid_regression()[t] {
            continue;
        }
        let tau = segment_center(t, segment_length);
        let (mut ds, mut de) = (pred_start[t], pred_end[t]);
        if ds == 0.0 && de == 0.0 {
            ds = DEGENERATE_INTERVAL_EPS / 2.0;
            de = DEGENERATE_INTERVAL_EPS / 2.0;
        }
        let g = giou_raw(
            tau - ds,
            tau + de,
            tau - labels.start_offset()[t],
            tau + labels.end_offset()[t],
        );
        sum += 1.0 - g;
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Weighted composite objective with its per-term breakdown.
///
/// `total = l1 * uni_focal + l2 * mul_focal + l3 * kl + l4 * iou`; the
/// breakdown fields hold the unweighted terms. Branch-dependent terms
/// require the branch probabilities when their weight is nonzero.
pub fn total_loss(
    output: &ModelOutput,
    labels: &SegmentLabels,
    weights: &LossWeights,
    focal_params: &FocalParams,
    segment_length: f64,
) -> Result<LossBreakdown, LossError> {
    check_len(
        "prob_fused",
        output.prob_fused.len(),
        labels.num_segments(),
    )?;
    let uni = if weights.uni_focal > 0.0 {
        uni_focal(output, labels, focal_params)?
    } else {
        0.0
    };
    let mul = focal_loss(&output.prob_fused, labels.class_label(), focal_params)?;
    let kl = if weights.alignment > 0.0 {
        let visual = output
            .prob_visual
            .as_deref()
            .ok_or(LossError::MissingBranch("visual"))?;
        let audio = output
            .prob_audio
            .as_deref()
            .ok_or(LossError::MissingBranch("audio"))?;
        kl_alignment(visual, &output.prob_fused, focal_params.epsilon)?
            + kl_alignment(audio, &output.prob_fused, focal_params.epsilon)?
    } else {
        0.0
    };
    let iou = iou_regression_loss(
        &output.start_offset_pred,
        &output.end_offset_pred,
        labels,
        segment_length,
    )?;
    Ok(LossBreakdown {
        total: weights.uni_focal * uni
            + weights.multi_focal * mul
            + weights.alignment * kl
            + weights.iou * iou,
        uni_focal: uni,
        mul_focal: mul,
        kl,
        iou,
    })
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

fn bool_column(values: &[bool]) -> Array2<f64> {
    column(&values.iter().map(|&b| f64::from(b)).collect::<Vec<_>>())
}

/// Focal loss on a `[T x 1]` probability node. `T` must be positive.
pub fn focal_loss_graph(
    g: &mut Graph,
    probs: NodeId,
    targets: &[bool],
    params: &FocalParams,
) -> NodeId {
    assert_eq!(g.value(probs).dim(), (targets.len(), 1));
    assert!(!targets.is_empty(), "focal loss over an empty video");
    let p = g.clamp(probs, params.epsilon, 1.0 - params.epsilon);
    let one_minus_p = g.one_minus(p);
    let pos_mask = g.constant(bool_column(targets));
    let neg_mask = g.one_minus(pos_mask);

    let w_pos = g.pow_scalar(one_minus_p, params.gamma);
    let ln_p = g.ln(p);
    let pos = g.mul(w_pos, ln_p);
    let pos = g.scale(pos, -params.alpha);
    let pos = g.mul(pos, pos_mask);

    let w_neg = g.pow_scalar(p, params.gamma);
    let ln_1mp = g.ln(one_minus_p);
    let neg = g.mul(w_neg, ln_1mp);
    let neg = g.scale(neg, -(1.0 - params.alpha));
    let neg = g.mul(neg, neg_mask);

    let per_segment = g.add(pos, neg);
    g.mean_all(per_segment)
}

/// Bernoulli KL `KL(branch || fused)` on `[T x 1]` probability nodes.
///
/// Gradients flow through both arguments unless `detach_fused` stops the
/// target side.
pub fn kl_alignment_graph(
    g: &mut Graph,
    branch: NodeId,
    fused: NodeId,
    epsilon: f64,
    detach_fused: bool,
) -> NodeId {
    let fused = if detach_fused { g.detach(fused) } else { fused };
    let p = g.clamp(branch, epsilon, 1.0 - epsilon);
    let q = g.clamp(fused, epsilon, 1.0 - epsilon);
    let ratio = g.div(p, q);
    let ln_ratio = g.ln(ratio);
    let first = g.mul(p, ln_ratio);
    let omp = g.one_minus(p);
    let omq = g.one_minus(q);
    let ratio2 = g.div(omp, omq);
    let ln_ratio2 = g.ln(ratio2);
    let second = g.mul(omp, ln_ratio2);
    let per_segment = g.add(first, second);
    g.mean_all(per_segment)
}

/// GIoU regression loss over positive segments on `[T x 1]` offset nodes
/// (post-rectifier, seconds). Returns `None` when the video has no positive
/// segments.
pub fn iou_regression_graph(
    g: &mut Graph,
    pred_start: NodeId,
    pred_end: NodeId,
    labels: &SegmentLabels,
    segment_length: f64,
) -> Option<NodeId> {
    let positives: Vec<usize> = (0..labels.num_segments())
        .filter(|&t| labels.valid_regression()[t])
        .collect();
    if positives.is_empty() {
        return None;
    }
    assert_eq!(g.value(pred_start).dim(), (labels.num_segments(), 1));
    assert_eq!(g.value(pred_end).dim(), (labels.num_segments(), 1));

    let rows = Arc::new(positives);
    let ds_hat = g.gather_rows(pred_start, rows.clone());
    let de_hat = g.gather_rows(pred_end, rows.clone());

    // Widen point predictions to a hair above zero length. The adjustment is
    // a constant chosen from the forward values, so gradients are untouched.
    let mut eps_adjust = Array2::zeros((rows.len(), 1));
    {
        let vs = g.value(ds_hat);
        let ve = g.value(de_hat);
        for i in 0..rows.len() {
            if vs[(i, 0)] == 0.0 && ve[(i, 0)] == 0.0 {
                eps_adjust[(i, 0)] = DEGENERATE_INTERVAL_EPS / 2.0;
            }
        }
    }

    let tau: Vec<f64> = rows
        .iter()
        .map(|&t| segment_center(t, segment_length))
        .collect();
    let gs: Vec<f64> = rows
        .iter()
        .zip(&tau)
        .map(|(&t, &tau)| tau - labels.start_offset()[t])
        .collect();
    let ge: Vec<f64> = rows
        .iter()
        .zip(&tau)
        .map(|(&t, &tau)| tau + labels.end_offset()[t])
        .collect();
    let gt_len: Vec<f64> = gs.iter().zip(&ge).map(|(s, e)| e - s).collect();

    let tau_c = g.constant(column(&tau));
    let gs_c = g.constant(column(&gs));
    let ge_c = g.constant(column(&ge));
    let gt_len_c = g.constant(column(&gt_len));
    let eps_c = g.constant(eps_adjust);

    let ds_adj = g.add(ds_hat, eps_c);
    let de_adj = g.add(de_hat, eps_c);
    let ps = g.sub(tau_c, ds_adj);
    let pe = g.add(tau_c, de_adj);

    let inter_hi = g.min(pe, ge_c);
    let inter_lo = g.max(ps, gs_c);
    let inter_raw = g.sub(inter_hi, inter_lo);
    let inter = g.relu(inter_raw);

    let pred_len = g.sub(pe, ps);
    let len_sum = g.add(pred_len, gt_len_c);
    let union = g.sub(len_sum, inter);

    let hull_hi = g.max(pe, ge_c);
    let hull_lo = g.min(ps, gs_c);
    let hull = g.sub(hull_hi, hull_lo);

    let iou = g.div(inter, union);
    let gap = g.sub(hull, union);
    let penalty = g.div(gap, hull);
    let giou = g.sub(iou, penalty);
    let per_segment = g.one_minus(giou);
    Some(g.mean_all(per_segment))
}

/// Probability/offset nodes feeding the composite training loss.
pub struct GraphLossInputs<'a> {
    pub prob_visual: Option<NodeId>,
    pub prob_audio: Option<NodeId>,
    pub prob_fused: NodeId,
    pub pred_start: NodeId,
    pub pred_end: NodeId,
    pub labels: &'a SegmentLabels,
    pub segment_length: f64,
}

/// Assembles the weighted objective on the graph.
///
/// Terms with zero weight (or missing branches) are skipped entirely, so
/// their parameters receive no gradient at all. Returns the total node and
/// the forward-value breakdown.
pub fn total_loss_graph(
    g: &mut Graph,
    inputs: &GraphLossInputs<'_>,
    weights: &LossWeights,
    focal_params: &FocalParams,
    detach_fused_target: bool,
) -> (NodeId, LossBreakdown) {
    let targets = inputs.labels.class_label();
    let branches = match (inputs.prob_visual, inputs.prob_audio) {
        (Some(v), Some(a)) => Some((v, a)),
        _ => None,
    };

    let mut terms: Vec<NodeId> = Vec::new();
    let mut breakdown = LossBreakdown {
        total: 0.0,
        uni_focal: 0.0,
        mul_focal: 0.0,
        kl: 0.0,
        iou: 0.0,
    };

    if weights.uni_focal > 0.0 {
        if let Some((v, a)) = branches {
            let fv = focal_loss_graph(g, v, targets, focal_params);
            let fa = focal_loss_graph(g, a, targets, focal_params);
            let sum = g.add(fv, fa);
            breakdown.uni_focal = g.scalar(sum);
            terms.push(g.scale(sum, weights.uni_focal));
        }
    }

    let mul = focal_loss_graph(g, inputs.prob_fused, targets, focal_params);
    breakdown.mul_focal = g.scalar(mul);
    if weights.multi_focal > 0.0 {
        terms.push(g.scale(mul, weights.multi_focal));
    }

    if weights.alignment > 0.0 {
        if let Some((v, a)) = branches {
            let kv = kl_alignment_graph(
                g,
                v,
                inputs.prob_fused,
                focal_params.epsilon,
                detach_fused_target,
            );
            let ka = kl_alignment_graph(
                g,
                a,
                inputs.prob_fused,
                focal_params.epsilon,
                detach_fused_target,
            );
            let sum = g.add(kv, ka);
            breakdown.kl = g.scalar(sum);
            terms.push(g.scale(sum, weights.alignment));
        }
    }

    if let Some(iou) = iou_regression_graph(
        g,
        inputs.pred_start,
        inputs.pred_end,
        inputs.labels,
        inputs.segment_length,
    ) {
        breakdown.iou = g.scalar(iou);
        if weights.iou > 0.0 {
            terms.push(g.scale(iou, weights.iou));
        }
    }

    let total = match terms.split_first() {
        None => g.constant_scalar(0.0),
        Some((&first, rest)) => rest.iter().fold(first, |acc, &t| g.add(acc, t)),
    };
    breakdown.total = g.scalar(total);
    (total, breakdown)
}
