//! The optimization loop: warmup+cosine schedule, Adam, per-video gradient
//! accumulation, per-epoch validation, and best-checkpoint tracking. Fully
//! deterministic for a fixed seed (gradients reduce in video order).

mod adam;
mod schedule;

pub use adam::Adam;
pub use schedule::lr_at;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{GradientSet, Graph};
use crate::eval::{evaluate_model, EvalError, EvalParams, EvalReport};
use crate::losses::{
    total_loss_graph, FocalParams, GraphLossInputs, LossBreakdown, LossError, LossWeights,
};
use crate::model::{FeatureInput, ForwardMode, ModalitySet, Model, ModelConfig, ModelError};
use crate::temporal::{clips_to_labels, VideoSample};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid schedule: {reason}")]
    InvalidSchedule { reason: String },
    #[error("invalid train config: {reason}")]
    InvalidConfig { reason: String },
    #[error("non-finite loss at step {step} (batch videos: {video_ids:?})")]
    NonFiniteLoss { step: usize, video_ids: Vec<String> },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Core(#[from] crate::temporal::CoreError),
}

fn default_modalities() -> ModalitySet {
    ModalitySet::ALL
}
fn default_true() -> bool {
    true
}

/// Table-3 style switches: which modalities feed the model, and whether the
/// uni-modal focal and alignment losses are active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    #[serde(default = "default_modalities")]
    pub modalities: ModalitySet,
    #[serde(default = "default_true")]
    pub uni_focal_on: bool,
    #[serde(default = "default_true")]
    pub alignment_on: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            modalities: ModalitySet::ALL,
            uni_focal_on: true,
            alignment_on: true,
        }
    }
}

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_warmup() -> usize {
    5
}
fn default_batch() -> usize {
    4
}
fn default_clip() -> Option<f64> {
    Some(1.0)
}
fn default_segment_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub focal: FocalParams,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: Option<f64>,
    /// Stop the KL gradient into the fused branch. Kept attached by
    /// default; this flag exposes the alternative.
    #[serde(default)]
    pub detach_fused_target: bool,
    #[serde(default = "default_segment_length")]
    pub segment_length: f64,
    #[serde(default)]
    pub eval: EvalParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            warmup_epochs: default_warmup(),
            batch_size: default_batch(),
            seed: 0,
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            model: ModelConfig::default(),
            ablation: AblationConfig::default(),
            grad_clip_norm: default_clip(),
            detach_fused_target: false,
            segment_length: default_segment_length(),
            eval: EvalParams::default(),
        }
    }
}

impl TrainConfig {
    /// The architecture actually trained: the base model config with the
    /// ablation's modality subset applied.
    pub fn resolved_model_config(&self) -> ModelConfig {
        let mut cfg = self.model.clone();
        cfg.modalities = self.ablation.modalities;
        cfg
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig {
                reason: format!("learning_rate {} must be positive", self.learning_rate),
            });
        }
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return Err(TrainError::InvalidConfig {
                reason: format!(
                    "warmup_epochs {} must be smaller than epochs {}",
                    self.warmup_epochs, self.epochs
                ),
            });
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig {
                reason: "batch_size must be positive".into(),
            });
        }
        if !(self.segment_length.is_finite() && self.segment_length > 0.0) {
            return Err(TrainError::InvalidConfig {
                reason: format!("segment_length {} must be positive", self.segment_length),
            });
        }
        self.weights
            .validate()
            .map_err(|e| TrainError::InvalidConfig { reason: e.to_string() })?;
        self.focal
            .validate()
            .map_err(|e| TrainError::InvalidConfig { reason: e.to_string() })?;
        self.resolved_model_config()
            .validate()
            .map_err(|e| TrainError::InvalidConfig { reason: e.to_string() })?;
        Ok(())
    }

    /// Loss weights with the ablation switches applied. Branch-dependent
    /// terms are also zeroed when the architecture has no branch heads.
    pub fn effective_weights(&self, has_branches: bool) -> LossWeights {
        LossWeights {
            uni_focal: if self.ablation.uni_focal_on && has_branches {
                self.weights.uni_focal
            } else {
                0.0
            },
            alignment: if self.ablation.alignment_on && has_branches {
                self.weights.alignment
            } else {
                0.0
            },
            ..self.weights
        }
    }
}

/// One optimization step's logged losses (unweighted terms, weighted total).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub uni_focal: f64,
    pub mul_focal: f64,
    pub kl: f64,
    pub iou: f64,
}

/// One epoch's validation snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "val_mAP_per_threshold")]
    pub val_ap_per_threshold: Vec<f64>,
    #[serde(rename = "val_avg_mAP")]
    pub val_avg_map: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    /// Parameters with the best validation average mAP (earliest epoch wins
    /// ties).
    pub best_model: Model,
    pub best_epoch: usize,
    pub best_val_avg: f64,
    /// Model state after the final step.
    pub final_model: Model,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

fn mix_seed(seed: u64, tag: u64, idx: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(idx.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gradients and loss terms for one video at the current parameters.
fn video_step(
    model: &Model,
    config: &TrainConfig,
    video: &VideoSample,
    dropout_seed: u64,
) -> Result<(GradientSet, LossBreakdown), TrainError> {
    let zero = LossBreakdown {
        total: 0.0,
        uni_focal: 0.0,
        mul_focal: 0.0,
        kl: 0.0,
        iou: 0.0,
    };
    if video.num_segments() == 0 {
        return Ok((vec![None; model.params().len()], zero));
    }
    let labels = clips_to_labels(&video.clips, video.duration, video.segment_length)?;

    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let mut rng = ChaCha20Rng::seed_from_u64(dropout_seed);
    let outs = model.forward_graph(
        &mut g,
        &bound,
        &FeatureInput::from_sample(video),
        None,
        &mut ForwardMode::Train { rng: &mut rng },
    )?;
    let has_branches = outs.prob_visual.is_some() && outs.prob_audio.is_some();
    let weights = config.effective_weights(has_branches);
    let (loss, breakdown) = total_loss_graph(
        &mut g,
        &GraphLossInputs {
            prob_visual: outs.prob_visual,
            prob_audio: outs.prob_audio,
            prob_fused: outs.prob_fused,
            pred_start: outs.pred_start,
            pred_end: outs.pred_end,
            labels: &labels,
            segment_length: video.segment_length,
        },
        &weights,
        &config.focal,
        config.detach_fused_target,
    );
    if !breakdown.total.is_finite() {
        // reported with the batch context by the caller
        return Ok((vec![None; model.params().len()], breakdown));
    }
    let mut grads = g.backward(loss);
    let collected = bound.iter().map(|&node| grads.take(node)).collect();
    Ok((collected, breakdown))
}

/// Trains a model per the config, evaluating on the validation set each
/// epoch and retaining the best-by-average-mAP parameters.
pub fn train(
    config: &TrainConfig,
    train_videos: &[VideoSample],
    val_videos: &[VideoSample],
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    if train_videos.is_empty() {
        return Err(TrainError::InvalidConfig {
            reason: "training set is empty".into(),
        });
    }
    let model_cfg = config.resolved_model_config();
    if let Some(first) = train_videos.first() {
        let dims = first.feature_dims();
        if dims != model_cfg.input_dims {
            return Err(TrainError::InvalidConfig {
                reason: format!(
                    "model input_dims {:?} do not match the data's feature dims {:?}",
                    model_cfg.input_dims, dims
                ),
            });
        }
    }

    let mut model = Model::new(model_cfg, config.seed)?;
    let mut optimizer = Adam::new(model.params());

    let n = train_videos.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;
    let warmup_steps = config.warmup_epochs * steps_per_epoch;

    let mut steps = Vec::with_capacity(total_steps);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng =
            ChaCha20Rng::seed_from_u64(mix_seed(config.seed, 0x5F1E, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(config.batch_size) {
            let lr = lr_at(global_step, total_steps, warmup_steps, config.learning_rate)?;

            let results: Vec<Result<(GradientSet, LossBreakdown), TrainError>> =
                batch
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &video_idx)| {
                        let dropout_seed = mix_seed(
                            config.seed,
                            0xD80_u64,
                            (global_step as u64) << 8 | slot as u64,
                        );
                        video_step(&model, config, &train_videos[video_idx], dropout_seed)
                    })
                    .collect();

            let mut batch_grads: GradientSet = vec![None; model.params().len()];
            let mut batch_breakdown = LossBreakdown {
                total: 0.0,
                uni_focal: 0.0,
                mul_focal: 0.0,
                kl: 0.0,
                iou: 0.0,
            };
            let scale = 1.0 / batch.len() as f64;
            for result in results {
                let (grads, breakdown) = result?;
                if !breakdown.total.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        step: global_step,
                        video_ids: batch
                            .iter()
                            .map(|&i| train_videos[i].video_id.clone())
                            .collect(),
                    });
                }
                batch_breakdown.total += breakdown.total * scale;
                batch_breakdown.uni_focal += breakdown.uni_focal * scale;
                batch_breakdown.mul_focal += breakdown.mul_focal * scale;
                batch_breakdown.kl += breakdown.kl * scale;
                batch_breakdown.iou += breakdown.iou * scale;
                for (slot, grad) in grads.into_iter().enumerate() {
                    let Some(grad) = grad else { continue };
                    match &mut batch_grads[slot] {
                        Some(acc) => *acc += &(grad * scale),
                        empty @ None => *empty = Some(grad * scale),
                    }
                }
            }

            optimizer.step(
                model.params_mut(),
                &batch_grads,
                lr,
                config.grad_clip_norm,
            );
            steps.push(StepRecord {
                step: global_step,
                total: batch_breakdown.total,
                uni_focal: batch_breakdown.uni_focal,
                mul_focal: batch_breakdown.mul_focal,
                kl: batch_breakdown.kl,
                iou: batch_breakdown.iou,
            });
            global_step += 1;
        }

        let val_report: EvalReport = evaluate_model(&model, val_videos, &config.eval)?;
        let lr_now = lr_at(
            global_step.min(total_steps),
            total_steps,
            warmup_steps,
            config.learning_rate,
        )?;
        epochs.push(EpochRecord {
            epoch,
            val_ap_per_threshold: val_report.ap_per_threshold.iter().map(|t| t.ap).collect(),
            val_avg_map: val_report.average,
            lr: lr_now,
        });
        let improved = best
            .as_ref()
            .is_none_or(|(_, best_avg, _)| val_report.average > *best_avg);
        if improved {
            best = Some((epoch, val_report.average, model.clone()));
        }
    }

    let (best_epoch, best_val_avg, best_model) = best.expect("at least one epoch ran");
    Ok(TrainResult {
        best_model,
        best_epoch,
        best_val_avg,
        final_model: model,
        steps,
        epochs,
    })
}
