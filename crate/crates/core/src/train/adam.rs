//! Adam with bias correction and global-norm gradient clipping.

use ndarray::Array2;

use crate::engine::{GradientSet, ParamStore};

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let m = params.iter().map(|(_, _, p)| Array2::zeros(p.dim())).collect();
        let v = params.iter().map(|(_, _, p)| Array2::zeros(p.dim())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m,
            v,
            t: 0,
        }
    }

    /// One update. `grads[i]` pairs with parameter `i`; `None` leaves that
    /// parameter (and its moments) untouched. Gradients are jointly scaled
    /// down when their global norm exceeds `clip_norm`.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradientSet,
        lr: f64,
        clip_norm: Option<f64>,
    ) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
        let norm_sq: f64 = grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let norm = norm_sq.sqrt();
        let scale = match clip_norm {
            Some(c) if norm > c && norm > 0.0 => c / norm,
            _ => 1.0,
        };

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let id = crate::engine::ParamId(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.value_mut(id);
            for ((pv, gv), (mv, vv)) in p
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                let g = gv * scale;
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * g;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }

    /// Global gradient norm of the most recent step's input, for diagnostics.
    pub fn global_norm(grads: &GradientSet) -> f64 {
        grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}
