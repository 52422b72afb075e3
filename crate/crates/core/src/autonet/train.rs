use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{sgd_step, OneCycle, SgdState};
use crate::aggregate::drop_view;
use crate::decode::DecoderConfig;
use crate::error::{Error, Result};
use crate::loss::{LossKind, OccupancyMap};
use crate::metrics::MetricReport;
use crate::pipeline::{self, Detector, PreparedFrame};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Only 1 is supported.
    pub batch_size: usize,
    pub momentum: f64,
    pub max_lr: f64,
    pub dropview: bool,
    pub seed: u64,
    pub loss: LossKind,
    /// Standard deviation of the Gaussian placed on each person, meters.
    pub target_sigma: f64,
    /// Stop after this many epochs without a validation MODA gain. `None`
    /// disables early stopping.
    pub patience: Option<usize>,
    pub warmup_fraction: f64,
    pub initial_div: f64,
    pub final_div: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 1,
            momentum: 0.9,
            max_lr: 0.02,
            dropview: false,
            seed: 0,
            loss: LossKind::KlCc,
            target_sigma: 0.2,
            patience: Some(3),
            warmup_fraction: 0.3,
            initial_div: 10.0,
            final_div: 1000.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!("batch size must be 1, got {}", self.batch_size)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::Config(format!("max_lr must be positive, got {}", self.max_lr)));
        }
        if !(self.target_sigma > 0.0) {
            return Err(Error::Config("target_sigma must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) || self.initial_div < 1.0 || self.final_div < 1.0 {
            return Err(Error::Config("invalid one-cycle parameters".into()));
        }
        Ok(())
    }

    pub fn schedule(&self, total_steps: usize) -> OneCycle {
        OneCycle {
            max_lr: self.max_lr,
            total_steps,
            warmup_fraction: self.warmup_fraction,
            initial_div: self.initial_div,
            final_div: self.final_div,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub frame_id: usize,
    pub lr: f64,
    pub objective: f64,
    pub kl: f64,
    pub cc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_objective: f64,
    pub val_tau: f64,
    pub val: MetricReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Decoder with the τ tuned on the validation frames at the best epoch.
    pub decoder: DecoderConfig,
    pub best_epoch: usize,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
}

impl TrainOutcome {
    /// Tab-separated step log with a header line.
    pub fn loss_log(&self) -> String {
        let mut s = String::from("step\tepoch\tframe\tlr\tobjective\tkl\tcc\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{}\t{}\t{}\t{:e}\t{}\t{}\t{}\n",
                r.step, r.epoch, r.frame_id, r.lr, r.objective, r.kl, r.cc
            ));
        }
        s
    }
}

pub fn targets<T: Scalar>(det: &Detector<T>, frames: &[PreparedFrame<T>], sigma: f64) -> Result<Vec<OccupancyMap<T>>> {
    frames
        .iter()
        .map(|f| OccupancyMap::gaussian_target(*det.grid(), &f.gt, sigma))
        .collect()
}

/// One SGD step on one frame. Returns the loss report of the forward pass.
pub fn train_step<T: Scalar>(
    det: &mut Detector<T>,
    views: &[(usize, &Tensor<T>)],
    target: &OccupancyMap<T>,
    kind: LossKind,
    state: &mut SgdState<T>,
    lr: f64,
) -> Result<crate::loss::LossReport> {
    let sample = det.loss_and_grad(views, target, kind)?;
    if !sample.report.objective.is_finite() {
        return Err(Error::TrainingDiverged {
            step: state.steps,
            detail: format!("objective is {}", sample.report.objective),
        });
    }
    let mut params = det.model.parameters_mut();
    sgd_step(&mut params, &sample.grads, state, lr)?;
    Ok(sample.report)
}

/// Trains `det` in place. Each epoch visits the training frames in a
/// seeded random order; with DropView one random view is removed from every
/// sample. After each epoch τ is tuned on `val` and the validation MODA
/// drives early stopping; the best epoch's parameters are restored at the
/// end. When `val` is empty the training frames are used for selection.
pub fn train<T: Scalar>(
    det: &mut Detector<T>,
    train_frames: &[PreparedFrame<T>],
    val: &[PreparedFrame<T>],
    cfg: &TrainConfig,
    decoder: &DecoderConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_frames.is_empty() {
        return Err(Error::EmptyInput("no training frames"));
    }
    let val = if val.is_empty() { train_frames } else { val };
    let train_targets = targets(det, train_frames, cfg.target_sigma)?;
    let total = cfg.epochs * train_frames.len();
    let schedule = cfg.schedule(total);
    let shapes: Vec<Vec<usize>> = det.model.parameters().iter().map(|p| p.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut state = SgdState::new(cfg.momentum, &shape_refs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut steps = Vec::with_capacity(total);
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Vec<Tensor<T>>, f64)> = None;
    let mut order: Vec<usize> = (0..train_frames.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &k in &order {
            let frame = &train_frames[k];
            let mut views: Vec<(usize, &Tensor<T>)> = frame.views.iter().map(|(id, t)| (*id, t)).collect();
            if cfg.dropview {
                views = drop_view(views, &mut rng);
            }
            let lr = schedule.lr(step);
            let report = train_step(det, &views, &train_targets[k], cfg.loss, &mut state, lr)?;
            sum += report.objective;
            steps.push(StepLog {
                step,
                epoch,
                frame_id: frame.frame_id,
                lr,
                objective: report.objective,
                kl: report.kl,
                cc: report.cc,
            });
            step += 1;
        }
        let preds = pipeline::predict_all(det, val)?;
        let (tau, sweep) = pipeline::tune_tau(&preds, val, decoder)?;
        let report = sweep
            .into_iter()
            .find(|(t, _)| *t == tau)
            .map(|(_, r)| r)
            .expect("best tau is in the sweep");
        let log = EpochLog {
            epoch,
            mean_objective: sum / train_frames.len() as f64,
            val_tau: tau,
            val: report,
        };
        on_epoch(&log);
        let moda = log.val.moda;
        epochs.push(log);
        let improved = best.as_ref().map_or(true, |b| moda > b.0);
        if improved {
            let params = det.model.parameters().into_iter().cloned().collect();
            best = Some((moda, epoch, params, tau));
        } else if let (Some(p), Some(b)) = (cfg.patience, &best) {
            if epoch - b.1 >= p {
                break;
            }
        }
    }
    let (_, best_epoch, params, tau) = best.expect("at least one epoch ran");
    for (dst, src) in det.model.parameters_mut().into_iter().zip(params) {
        *dst = src;
    }
    Ok(TrainOutcome {
        decoder: DecoderConfig { tau, ..*decoder },
        best_epoch,
        epochs,
        steps,
    })
}
