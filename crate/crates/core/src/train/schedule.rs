//! Linear warmup into cosine decay, interpolated per optimization step.

use super::TrainError;

/// Learning rate at `step` of a `total_steps`-step run with
/// `warmup_steps` of linear warmup.
///
/// Warmup runs `base_lr * (step + 1) / warmup_steps`; afterwards the rate
/// follows `base_lr * 0.5 * (1 + cos(pi * progress))` over the remaining
/// steps, reaching exactly `base_lr` at the cosine start and 0 at
/// `total_steps`.
pub fn lr_at(
    step: usize,
    total_steps: usize,
    warmup_steps: usize,
    base_lr: f64,
) -> Result<f64, TrainError> {
    if total_steps == 0 || warmup_steps >= total_steps {
        return Err(TrainError::InvalidSchedule {
            reason: format!(
                "warmup_steps {warmup_steps} must be smaller than total_steps {total_steps}"
            ),
        });
    }
    if step > total_steps {
        return Err(TrainError::InvalidSchedule {
            reason: format!("step {step} exceeds total_steps {total_steps}"),
        });
    }
    if !(base_lr.is_finite() && base_lr > 0.0) {
        return Err(TrainError::InvalidSchedule {
            reason: format!("base_lr {base_lr} must be positive"),
        });
    }
    if step < warmup_steps {
        return Ok(base_lr * (step + 1) as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
