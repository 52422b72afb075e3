use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Heavy-ball momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState<T> {
    pub momentum: T,
    pub velocity: Vec<Tensor<T>>,
    pub steps: usize,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(momentum: f64, shapes: &[&[usize]]) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            momentum: T::from_f64_lossy(momentum),
            velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            steps: 0,
        })
    }
}

/// `v ← μ·v + g; θ ← θ − lr·v`. Rejects non-finite gradients before
/// touching any parameter.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], state: &mut SgdState<T>, lr: f64) -> Result<()> {
    if params.len() != grads.len() || grads.len() != state.velocity.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if let Some(k) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::TrainingDiverged {
            step: state.steps,
            detail: format!("non-finite gradient in parameter tensor {k}"),
        });
    }
    let lr = T::from_f64_lossy(lr);
    let mu = state.momentum;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        p.check_same_shape(g)?;
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mu * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    state.steps += 1;
    Ok(())
}

/// One-cycle schedule: linear warm-up from `max_lr / initial_div` to
/// `max_lr` over the first `warmup_fraction` of steps, then cosine decay
/// to `max_lr / final_div`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub initial_div: f64,
    pub final_div: f64,
}

impl OneCycle {
    pub fn new(max_lr: f64, total_steps: usize) -> Self {
        Self {
            max_lr,
            total_steps,
            warmup_fraction: 0.3,
            initial_div: 10.0,
            final_div: 1000.0,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let total = self.total_steps.max(1) as f64;
        let s = (step as f64).min(total);
        let start = self.max_lr / self.initial_div;
        let end = self.max_lr / self.final_div;
        let warm = self.warmup_fraction * total;
        if s <= warm {
            if warm <= 0.0 {
                return self.max_lr;
            }
            start + (self.max_lr - start) * s / warm
        } else {
            let k = (s - warm) / (total - warm);
            end + (self.max_lr - end) * 0.5 * (1.0 + (std::f64::consts::PI * k).cos())
        }
    }

    /// Largest per-step change of the schedule.
    pub fn max_step_change(&self) -> f64 {
        let total = self.total_steps.max(1) as f64;
        let rise = self.max_lr * (1.0 - 1.0 / self.initial_div) / (self.warmup_fraction * total);
        let fall = self.max_lr * (1.0 - 1.0 / self.final_div) * std::f64::consts::FRAC_PI_2 / ((1.0 - self.warmup_fraction) * total);
        rise.max(fall)
    }
}

pub fn one_cycle_lr(step: usize, total_steps: usize, max_lr: f64) -> f64 {
    OneCycle::new(max_lr, total_steps).lr(step)
}
