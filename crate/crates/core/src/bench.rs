//! Generalization protocols: inference on camera subsets, train/test across
//! two rigs of one scene, and train/test across scenes. Trained models are
//! never modified by the evaluation paths; only the warp tables change.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonet::model::{Model, ModelConfig};
use crate::autonet::train::{self, TrainConfig};
use crate::decode::DecoderConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::pipeline::{self, Detector, PreparedFrame};
use crate::scalar::Scalar;
use crate::sceneio::Dataset;
use crate::synthgen::{self, CameraRig, CrowdSpec, GeneratorConfig, RigSpec, SceneSpec};

/// Runs `model` on `test` using only the listed cameras. The full rig is
/// always evaluated first and reported with its id list.
pub fn run_varying_cameras<T: Scalar>(
    model: &Model<T>,
    decoder: &DecoderConfig,
    test: &Dataset,
    subsets: &[Vec<usize>],
) -> Result<Vec<(Vec<usize>, MetricReport)>> {
    let det = Detector::for_dataset(model.clone(), test)?;
    let frames = pipeline::prepare_frames::<T>(test);
    varying_cameras_prepared(&det, decoder, &frames, subsets)
}

/// Same as [`run_varying_cameras`] on already prepared frames.
pub fn varying_cameras_prepared<T: Scalar>(
    det: &Detector<T>,
    decoder: &DecoderConfig,
    frames: &[PreparedFrame<T>],
    subsets: &[Vec<usize>],
) -> Result<Vec<(Vec<usize>, MetricReport)>> {
    let full = det.camera_ids();
    let mut out = vec![(full.clone(), pipeline::evaluate(det, frames, decoder)?.report)];
    for ids in subsets {
        if ids.is_empty() {
            return Err(Error::EmptyInput("camera subset is empty"));
        }
        for id in ids {
            det.warp_table(*id)?;
        }
        let sub: Vec<PreparedFrame<T>> = frames.iter().map(|f| f.select(ids)).collect::<Result<_>>()?;
        out.push((ids.clone(), pipeline::evaluate(det, &sub, decoder)?.report));
    }
    Ok(out)
}

/// Every non-empty subset of `ids`, ordered by size then lexicographically.
pub fn all_subsets(ids: &[usize]) -> Vec<Vec<usize>> {
    let n = ids.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ids[k]).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    subsets
}

/// 2×2 table: `cells[i][j]` is the model trained on rig `i` tested on rig `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTable {
    pub labels: [String; 2],
    pub cells: [[MetricReport; 2]; 2],
}

impl CrossTable {
    pub fn transposed_labels(&self) -> Self {
        Self {
            labels: [self.labels[1].clone(), self.labels[0].clone()],
            cells: [
                [self.cells[1][1].clone(), self.cells[1][0].clone()],
                [self.cells[0][1].clone(), self.cells[0][0].clone()],
            ],
        }
    }

    pub fn diagonal_moda(&self) -> f64 {
        0.5 * (self.cells[0][0].moda + self.cells[1][1].moda)
    }

    pub fn off_diagonal_moda(&self) -> f64 {
        0.5 * (self.cells[0][1].moda + self.cells[1][0].moda)
    }

    pub fn rows(&self) -> Vec<(String, MetricReport)> {
        let mut rows = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                rows.push((format!("train {} / test {}", self.labels[i], self.labels[j]), self.cells[i][j].clone()));
            }
        }
        rows
    }
}

/// A trained model together with its tuned decoder.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub model: Model<T>,
    pub decoder: DecoderConfig,
}

/// Cross-evaluates two trained models on the test sets of their rigs.
pub fn cross_evaluate<T: Scalar>(labels: [&str; 2], models: [&Trained<T>; 2], tests: [&Dataset; 2]) -> Result<CrossTable> {
    let frames: Vec<Vec<PreparedFrame<T>>> = tests.iter().map(|d| pipeline::prepare_frames(d)).collect();
    let mut cells = Vec::with_capacity(4);
    for m in models {
        for (d, f) in tests.iter().zip(&frames) {
            let det = Detector::for_dataset(m.model.clone(), d)?;
            cells.push(pipeline::evaluate(&det, f, &m.decoder)?.report);
        }
    }
    let [a, b, c, d]: [MetricReport; 4] = cells.try_into().expect("four cells");
    Ok(CrossTable {
        labels: [labels[0].to_string(), labels[1].to_string()],
        cells: [[a, b], [c, d]],
    })
}

/// Trains one model on `train_set`, holding out its last `val_frames` frames
/// for early stopping and τ selection.
pub fn train_model<T: Scalar>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &Dataset,
    val_frames: usize,
) -> Result<Trained<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let model = Model::new(model_cfg.clone(), &mut rng)?;
    let mut det = Detector::for_dataset(model, train_set)?;
    let frames = pipeline::prepare_frames::<T>(train_set);
    let split = frames.len().saturating_sub(val_frames).max(1);
    let (tr, val) = frames.split_at(split);
    let outcome = train::train(&mut det, tr, val, train_cfg, &DecoderConfig::default(), |_| {})?;
    Ok(Trained {
        model: det.model,
        decoder: outcome.decoder,
    })
}

/// Trains on rig A and on rig B, then fills the cross table.
pub fn run_config_generalization<T: Scalar>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    rig_a: (&Dataset, &Dataset),
    rig_b: (&Dataset, &Dataset),
    val_frames: usize,
) -> Result<CrossTable> {
    let a = train_model::<T>(model_cfg, train_cfg, rig_a.0, val_frames)?;
    let b = train_model::<T>(model_cfg, train_cfg, rig_b.0, val_frames)?;
    cross_evaluate(["A", "B"], [&a, &b], [rig_a.1, rig_b.1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub seen: MetricReport,
    pub unseen: MetricReport,
    /// Unseen scene with a rig that has more cameras than the training rig.
    pub unseen_extra_camera: Option<MetricReport>,
}

pub fn run_scene_generalization<T: Scalar>(
    trained: &Trained<T>,
    seen_test: &Dataset,
    unseen_test: &Dataset,
    unseen_extra: Option<&Dataset>,
) -> Result<SceneReport> {
    let eval = |d: &Dataset| -> Result<MetricReport> {
        let det = Detector::for_dataset(trained.model.clone(), d)?;
        Ok(pipeline::evaluate(&det, &pipeline::prepare_frames(d), &trained.decoder)?.report)
    };
    Ok(SceneReport {
        seen: eval(seen_test)?,
        unseen: eval(unseen_test)?,
        unseen_extra_camera: unseen_extra.map(eval).transpose()?,
    })
}

/// Sample mean and (n−1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aligned text table with the columns method, MODA, MODP, Prec, Recall
/// (percentages).
pub fn format_table(title: &str, rows: &[(String, MetricReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("method".len());
    let mut s = format!("{title}\n{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}\n", "method", "MODA", "MODP", "Prec", "Recall");
    for (name, r) in rows {
        s.push_str(&format!(
            "{:<width$}  {:>7.1}  {:>7.1}  {:>7.1}  {:>7.1}\n",
            name,
            100.0 * r.moda,
            100.0 * r.modp,
            100.0 * r.precision,
            100.0 * r.recall
        ));
    }
    s
}

/// Same table with mean ± std per cell over seeds.
pub fn format_seed_table(title: &str, rows: &[(String, Vec<MetricReport>)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("method".len());
    let mut s = format!(
        "{title}\n{:<width$}  {:>12}  {:>12}  {:>12}  {:>12}\n",
        "method", "MODA", "MODP", "Prec", "Recall"
    );
    for (name, reps) in rows {
        s.push_str(&format!("{name:<width$}"));
        for f in [
            |r: &MetricReport| r.moda,
            |r: &MetricReport| r.modp,
            |r: &MetricReport| r.precision,
            |r: &MetricReport| r.recall,
        ] {
            let (m, sd) = mean_std(&reps.iter().map(|r| 100.0 * f(r)).collect::<Vec<_>>());
            s.push_str(&format!("  {:>12}", format!("{m:.1} ({sd:.1})")));
        }
        s.push('\n');
    }
    s
}

/// Tab-separated machine rows: `table method MODA MODP Prec Recall`.
pub fn machine_rows(table: &str, rows: &[(String, MetricReport)]) -> String {
    rows.iter()
        .map(|(name, r)| format!("{table}\t{name}\t{}\t{}\t{}\t{}\n", r.moda, r.modp, r.precision, r.recall))
        .collect()
}

/// Everything needed to run all three protocols for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub scene: SceneSpec,
    pub unseen_scene: SceneSpec,
    pub crowd: CrowdSpec,
    pub rig_a: RigSpec,
    pub rig_b: RigSpec,
    pub train_frames: usize,
    pub val_frames: usize,
    pub test_frames: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl BenchPlan {
    /// Desk-scale defaults: two 4-camera rigs over the same 8 m × 8 m scene
    /// (high and narrow against low and wide), and a second scene for transfer tests.
    pub fn desk() -> Result<Self> {
        let scene = SceneSpec::preset("a")?;
        let rig_a = RigSpec {
            seed: 101,
            azimuth_offset_deg: 45.0,
            ..RigSpec::default()
        };
        let rig_b = RigSpec {
            seed: 202,
            azimuth_offset_deg: 0.0,
            height_range: (2.6, 3.2),
            hfov_deg: 90.0,
            radius_factor: 1.3,
            ..RigSpec::default()
        };
        let grid = scene.grid()?;
        let mut model = ModelConfig::new(rig_a.image_height, rig_a.image_width, grid.rows, grid.cols);
        model.extractor_channels = vec![16];
        model.feature_channels = 16;
        model.head_channels = [16, 16];
        Ok(Self {
            unseen_scene: SceneSpec::preset("b")?,
            scene,
            crowd: CrowdSpec::default(),
            rig_a,
            rig_b,
            train_frames: 80,
            val_frames: 10,
            test_frames: 20,
            model,
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
        })
    }
}

/// Per-seed numbers of one bench run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub plain: CrossTable,
    pub dropview: CrossTable,
    /// Model trained on rig A, tested on every camera subset of rig A.
    pub plain_subsets: Vec<(Vec<usize>, MetricReport)>,
    pub dropview_subsets: Vec<(Vec<usize>, MetricReport)>,
    pub scene: SceneReport,
}

impl SeedResult {
    /// Mean MODA over subsets of each size, index 0 = one camera.
    pub fn moda_by_size(subsets: &[(Vec<usize>, MetricReport)]) -> Vec<f64> {
        let max = subsets.iter().map(|s| s.0.len()).max().unwrap_or(0);
        (1..=max)
            .map(|k| {
                let v: Vec<f64> = subsets.iter().filter(|s| s.0.len() == k).map(|s| s.1.moda).collect();
                mean_std(&v).0
            })
            .collect()
    }

    /// Mean MODA over the strict subsets.
    pub fn reduced_moda(subsets: &[(Vec<usize>, MetricReport)]) -> f64 {
        let full = subsets.iter().map(|s| s.0.len()).max().unwrap_or(0);
        let v: Vec<f64> = subsets.iter().filter(|s| s.0.len() < full).map(|s| s.1.moda).collect();
        mean_std(&v).0
    }
}

fn generated(scene: &SceneSpec, rig: &RigSpec, crowd: &CrowdSpec, n: usize, seed: u64, first: usize) -> Result<Dataset> {
    let rig = CameraRig::build(scene, rig)?;
    synthgen::generate(
        scene,
        &rig,
        crowd,
        &GeneratorConfig {
            n_frames: n,
            seed,
            first_frame: first,
            ..GeneratorConfig::default()
        },
    )
}

/// Runs all protocols for one seed. The seed drives data, initialization
/// and sample order; the rigs stay fixed.
pub fn run_seed<T: Scalar>(plan: &BenchPlan, seed: u64) -> Result<SeedResult> {
    let n_train = plan.train_frames + plan.val_frames;
    let crowd = CrowdSpec {
        appearance_seed: plan.crowd.appearance_seed ^ seed,
        ..plan.crowd.clone()
    };
    let data_seed = seed.wrapping_mul(7919).wrapping_add(17);
    let train_a = generated(&plan.scene, &plan.rig_a, &crowd, n_train, data_seed, 0)?;
    let test_a = generated(&plan.scene, &plan.rig_a, &crowd, plan.test_frames, data_seed, n_train)?;
    let train_b = generated(&plan.scene, &plan.rig_b, &crowd, n_train, data_seed, 0)?;
    let test_b = generated(&plan.scene, &plan.rig_b, &crowd, plan.test_frames, data_seed, n_train)?;

    let plain_cfg = TrainConfig {
        seed,
        dropview: false,
        ..plan.train.clone()
    };
    let drop_cfg = TrainConfig {
        dropview: true,
        ..plain_cfg.clone()
    };
    let jobs = [(&plain_cfg, &train_a), (&plain_cfg, &train_b), (&drop_cfg, &train_a), (&drop_cfg, &train_b)];
    let trained: Vec<Trained<T>> = jobs
        .par_iter()
        .map(|(cfg, d)| train_model::<T>(&plan.model, cfg, d, plan.val_frames))
        .collect::<Result<_>>()?;

    let plain = cross_evaluate(["A", "B"], [&trained[0], &trained[1]], [&test_a, &test_b])?;
    let dropview = cross_evaluate(["A", "B"], [&trained[2], &trained[3]], [&test_a, &test_b])?;
    let subsets = all_subsets(&test_a.camera_ids());
    let strict: Vec<Vec<usize>> = subsets.iter().filter(|s| s.len() < test_a.cameras.len()).cloned().collect();
    let with_full = |t: &Trained<T>| -> Result<Vec<(Vec<usize>, MetricReport)>> {
        run_varying_cameras(&t.model, &t.decoder, &test_a, &strict)
    };

    let unseen = generated(&plan.unseen_scene, &plan.rig_a, &crowd, plan.test_frames, data_seed ^ 0xB, 0)?;
    let extra_rig = RigSpec {
        n_cameras: plan.rig_a.n_cameras + 1,
        ..plan.rig_a.clone()
    };
    let unseen_extra = generated(&plan.unseen_scene, &extra_rig, &crowd, plan.test_frames, data_seed ^ 0xB, 0)?;
    Ok(SeedResult {
        seed,
        plain_subsets: with_full(&trained[0])?,
        dropview_subsets: with_full(&trained[2])?,
        scene: run_scene_generalization(&trained[0], &test_a, &unseen, Some(&unseen_extra))?,
        plain,
        dropview,
    })
}

/// Runs every seed of the plan (in parallel) and returns results in seed order.
pub fn run_plan<T: Scalar>(plan: &BenchPlan) -> Result<Vec<SeedResult>> {
    plan.seeds.par_iter().map(|&s| run_seed::<T>(plan, s)).collect()
}

/// Human-readable report of a multi-seed run: the three protocol tables
/// with mean (std) over seeds.
pub fn report(results: &[SeedResult]) -> String {
    let collect = |f: &dyn Fn(&SeedResult) -> MetricReport| results.iter().map(f).collect::<Vec<_>>();
    let mut out = String::new();

    let n = results.first().map_or(0, |r| r.plain_subsets.len());
    let mut rows = Vec::new();
    for k in 0..n {
        let ids = &results[0].plain_subsets[k].0;
        rows.push((format!("plain {ids:?}"), collect(&|r| r.plain_subsets[k].1.clone())));
        rows.push((format!("dropview {ids:?}"), collect(&|r| r.dropview_subsets[k].1.clone())));
    }
    out.push_str(&format_seed_table("varying cameras (trained on rig A, full rig first)", &rows));
    out.push('\n');

    let mut rows = Vec::new();
    for (name, pick) in [("plain", 0usize), ("dropview", 1)] {
        for i in 0..2 {
            for j in 0..2 {
                let label = format!("{name} train {} / test {}", ["A", "B"][i], ["A", "B"][j]);
                rows.push((label, collect(&|r| [&r.plain, &r.dropview][pick].cells[i][j].clone())));
            }
        }
    }
    out.push_str(&format_seed_table("camera configuration generalization", &rows));
    out.push('\n');

    let mut rows = vec![
        ("seen scene".to_string(), collect(&|r| r.scene.seen.clone())),
        ("unseen scene".to_string(), collect(&|r| r.scene.unseen.clone())),
    ];
    if results.iter().all(|r| r.scene.unseen_extra_camera.is_some()) {
        rows.push((
            "unseen scene, +1 camera".to_string(),
            collect(&|r| r.scene.unseen_extra_camera.clone().expect("checked")),
        ));
    }
    out.push_str(&format_seed_table("scene generalization (trained on scene A, rig A)", &rows));
    out
}

/// Random subset of half the cameras (rounded down, at least one).
pub fn random_half<R: rand::Rng + ?Sized>(ids: &[usize], rng: &mut R) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.shuffle(rng);
    v.truncate((ids.len() / 2).max(1));
    v.sort_unstable();
    v
}
