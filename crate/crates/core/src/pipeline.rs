//! End-to-end detector: shared extractor per view, ground warp, view
//! pooling, occupancy head, decoding. Also the training-time loss and
//! gradient of the whole chain.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::aggregate::{self, GroundFeatures, PoolMode};
use crate::autonet::model::{ExtractorTrace, Model};
use crate::decode::{self, DecoderConfig, Detection};
use crate::error::{Error, Result};
use crate::geometry::{Camera, GroundGrid};
use crate::loss::{self, LossKind, LossReport, OccupancyMap};
use crate::metrics::{self, FrameRow, MatchResult, MetricReport};
use crate::scalar::Scalar;
use crate::sceneio::Dataset;
use crate::tensor::Tensor;
use crate::warp::{ProjectedFeatureMap, WarpTable};

/// A frame ready for the network: per-view image tensors keyed by camera id.
#[derive(Clone, Debug)]
pub struct PreparedFrame<T> {
    pub frame_id: usize,
    pub views: Vec<(usize, Tensor<T>)>,
    pub gt: Vec<[f64; 2]>,
}

impl<T: Scalar> PreparedFrame<T> {
    /// Only the given cameras, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let views = ids
            .iter()
            .map(|&id| {
                self.views
                    .iter()
                    .find(|(v, _)| *v == id)
                    .cloned()
                    .ok_or(Error::UnknownCamera(id))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            frame_id: self.frame_id,
            views,
            gt: self.gt.clone(),
        })
    }
}

pub fn prepare_frames<T: Scalar>(dataset: &Dataset) -> Vec<PreparedFrame<T>> {
    dataset
        .frames
        .par_iter()
        .map(|f| PreparedFrame {
            frame_id: f.id,
            views: dataset
                .cameras
                .iter()
                .zip(&f.images)
                .map(|(c, img)| (c.id, img.to_tensor()))
                .collect(),
            gt: f.gt_points(),
        })
        .collect()
}

pub struct Detector<T> {
    pub model: Model<T>,
    grid: GroundGrid,
    tables: BTreeMap<usize, WarpTable<T>>,
    pool_mode: PoolMode,
}

/// Parameter gradients (aligned with `Model::parameters`) and loss of one sample.
pub struct SampleGradient<T> {
    pub report: LossReport,
    pub grads: Vec<Tensor<T>>,
    pub prediction: OccupancyMap<T>,
}

struct ViewPass<T> {
    view_id: usize,
    trace: ExtractorTrace<T>,
    projected: ProjectedFeatureMap<T>,
}

impl<T: Scalar> Detector<T> {
    /// Precomputes one warp table per camera at the model's feature resolution.
    pub fn new(model: Model<T>, grid: GroundGrid, cameras: &[(usize, Camera)]) -> Result<Self> {
        let mut det = Self {
            pool_mode: if model.config.coverage_normalized {
                PoolMode::CoverageNormalized
            } else {
                PoolMode::Mean
            },
            model,
            grid,
            tables: BTreeMap::new(),
        };
        det.set_cameras(grid, cameras)?;
        Ok(det)
    }

    pub fn for_dataset(model: Model<T>, dataset: &Dataset) -> Result<Self> {
        let cams: Vec<_> = dataset.cameras.iter().map(|c| (c.id, c.camera.clone())).collect();
        Self::new(model, dataset.grid, &cams)
    }

    /// Swaps in a different rig or scene without touching the model.
    pub fn set_cameras(&mut self, grid: GroundGrid, cameras: &[(usize, Camera)]) -> Result<()> {
        let cfg = &self.model.config;
        let mut tables = BTreeMap::new();
        for (id, cam) in cameras {
            if (cam.image_height, cam.image_width) != (cfg.image_height, cfg.image_width) {
                return Err(Error::Shape(format!(
                    "camera {id} delivers {}x{} images, model expects {}x{}",
                    cam.image_height, cam.image_width, cfg.image_height, cfg.image_width
                )));
            }
            let scaled = cam.rescaled(cfg.feature_width, cfg.feature_height)?;
            let table = WarpTable::new(scaled.homography(), &grid, cfg.feature_height, cfg.feature_width)?;
            if tables.insert(*id, table).is_some() {
                return Err(Error::Config(format!("duplicate camera id {id}")));
            }
        }
        self.grid = grid;
        self.tables = tables;
        Ok(())
    }

    pub fn grid(&self) -> &GroundGrid {
        &self.grid
    }

    pub fn camera_ids(&self) -> Vec<usize> {
        self.tables.keys().copied().collect()
    }

    pub fn warp_table(&self, id: usize) -> Result<&WarpTable<T>> {
        self.tables.get(&id).ok_or(Error::UnknownCamera(id))
    }

    fn view_passes(&self, views: &[(usize, &Tensor<T>)]) -> Result<Vec<ViewPass<T>>> {
        if views.is_empty() {
            return Err(Error::EmptyInput("inference needs at least one view"));
        }
        let mut sorted: Vec<(usize, &Tensor<T>)> = views.to_vec();
        sorted.sort_by_key(|v| v.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("duplicate view id".into()));
        }
        sorted
            .par_iter()
            .map(|&(id, img)| {
                let table = self.warp_table(id)?;
                let (fm, trace) = self.model.extract(img, id)?;
                let projected = table.apply(&fm)?;
                Ok(ViewPass {
                    view_id: id,
                    trace,
                    projected,
                })
            })
            .collect()
    }

    fn pooled(&self, passes: &[ViewPass<T>]) -> Result<GroundFeatures<T>> {
        let stack: Vec<&ProjectedFeatureMap<T>> = passes.iter().map(|p| &p.projected).collect();
        aggregate::pool(&stack, self.pool_mode)
    }

    /// Pooled ground features for a set of views (any order).
    pub fn ground_features(&self, views: &[(usize, &Tensor<T>)]) -> Result<GroundFeatures<T>> {
        self.pooled(&self.view_passes(views)?)
    }

    pub fn predict(&self, views: &[(usize, &Tensor<T>)]) -> Result<OccupancyMap<T>> {
        let pooled = self.ground_features(views)?;
        let trace = self.model.head_forward(&pooled)?;
        OccupancyMap::new(self.grid, trace.probabilities().data().to_vec())
    }

    pub fn predict_frame(&self, frame: &PreparedFrame<T>) -> Result<OccupancyMap<T>> {
        let views: Vec<_> = frame.views.iter().map(|(id, t)| (*id, t)).collect();
        self.predict(&views)
    }

    pub fn detect(&self, views: &[(usize, &Tensor<T>)], decoder: &DecoderConfig) -> Result<Vec<Detection>> {
        Ok(decode::decode(&self.predict(views)?, decoder))
    }

    /// Loss against `target` and the gradient of every model parameter.
    pub fn loss_and_grad(&self, views: &[(usize, &Tensor<T>)], target: &OccupancyMap<T>, kind: LossKind) -> Result<SampleGradient<T>> {
        let passes = self.view_passes(views)?;
        let pooled = self.pooled(&passes)?;
        let head = self.model.head_forward(&pooled)?;
        let prob = head.probabilities();
        let (report, grad_p) = loss::objective(prob.data(), &target.values, kind)?;
        let grad_p = Tensor::from_vec(prob.shape(), grad_p)?;

        let mut grads = self.model.zero_grads();
        let grad_pooled = self.model.head_backward(&head, &grad_p, &mut grads)?;
        let grad_view = aggregate::pool_backward(&pooled, &grad_pooled)?;

        // per-view extractor gradients, reduced in ascending view-id order
        let per_view: Vec<Vec<Tensor<T>>> = passes
            .par_iter()
            .map(|pass| {
                let table = self.warp_table(pass.view_id)?;
                let grad_feat = table.backward(&grad_view)?;
                let mut g = self.model.zero_grads();
                self.model.extractor_backward(&pass.trace, &grad_feat, &mut g)?;
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let n_ext = 2 * self.model.extractor.len();
        for g in &per_view {
            for (acc, part) in grads.iter_mut().zip(g).take(n_ext) {
                acc.add_assign(part)?;
            }
        }
        Ok(SampleGradient {
            report,
            grads,
            prediction: OccupancyMap::new(self.grid, prob.data().to_vec())?,
        })
    }
}

/// Per-frame predictions for a set of frames.
pub fn predict_all<T: Scalar>(det: &Detector<T>, frames: &[PreparedFrame<T>]) -> Result<Vec<OccupancyMap<T>>> {
    frames.iter().map(|f| det.predict_frame(f)).collect()
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricReport,
    pub rows: Vec<FrameRow>,
}

/// Decodes precomputed predictions and scores them against ground truth.
pub fn score_predictions<T: Scalar>(
    predictions: &[OccupancyMap<T>],
    frames: &[PreparedFrame<T>],
    decoder: &DecoderConfig,
    gate: f64,
) -> Result<Evaluation> {
    let matches: Vec<(usize, MatchResult)> = predictions
        .iter()
        .zip(frames)
        .map(|(p, f)| {
            let dets: Vec<[f64; 2]> = decode::decode(p, decoder).iter().map(|d| [d.x, d.y]).collect();
            (f.frame_id, metrics::match_detections(&dets, &f.gt, gate))
        })
        .collect();
    let results: Vec<MatchResult> = matches.iter().map(|(_, m)| m.clone()).collect();
    Ok(Evaluation {
        report: metrics::compute_metrics(&results)?,
        rows: matches.iter().map(|(id, m)| FrameRow::new(*id, m)).collect(),
    })
}

pub fn evaluate<T: Scalar>(det: &Detector<T>, frames: &[PreparedFrame<T>], decoder: &DecoderConfig) -> Result<Evaluation> {
    let preds = predict_all(det, frames)?;
    score_predictions(&preds, frames, decoder, metrics::DEFAULT_GATE)
}

/// Thresholds swept by τ tuning: 0.05, 0.10, …, 0.95.
pub fn tau_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Picks the τ with the best MODA (ties → smaller τ). Returns the best τ
/// and the full sweep.
pub fn tune_tau<T: Scalar>(
    predictions: &[OccupancyMap<T>],
    frames: &[PreparedFrame<T>],
    base: &DecoderConfig,
) -> Result<(f64, Vec<(f64, MetricReport)>)> {
    let mut sweep = Vec::new();
    for tau in tau_grid() {
        let cfg = DecoderConfig { tau, ..*base };
        sweep.push((tau, score_predictions(predictions, frames, &cfg, metrics::DEFAULT_GATE)?.report));
    }
    let best = sweep
        .iter()
        .fold(None::<&(f64, MetricReport)>, |best, cur| match best {
            Some(b) if b.1.moda >= cur.1.moda => Some(b),
            _ => Some(cur),
        })
        .map(|b| b.0)
        .expect("non-empty sweep");
    Ok((best, sweep))
}
