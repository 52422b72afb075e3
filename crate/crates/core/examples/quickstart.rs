//! Generates a small scene, trains a compact detector on it and evaluates
//! on held-out frames, all in memory.
//!
//!     cargo run --release -p groundview --example quickstart

use groundview::autonet::train::{self, TrainConfig};
use groundview::pipeline;
use groundview::synthgen::{self, CameraRig, CrowdSpec, GeneratorConfig, RigSpec, SceneSpec};
use groundview::{DecoderConfig, Detector, Model, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> groundview::Result<()> {
    let scene = SceneSpec::preset("a")?;
    let rig = CameraRig::build(&scene, &RigSpec::default())?;
    let crowd = CrowdSpec::default();
    let gen = |n_frames, first_frame| GeneratorConfig {
        n_frames,
        first_frame,
        seed: 1,
        ..GeneratorConfig::default()
    };
    let train_set = synthgen::generate(&scene, &rig, &crowd, &gen(60, 0))?;
    let test_set = synthgen::generate(&scene, &rig, &crowd, &gen(20, 60))?;

    let grid = scene.grid()?;
    let cam = &train_set.cameras[0].camera;
    let mut cfg = ModelConfig::new(cam.image_height, cam.image_width, grid.rows, grid.cols);
    cfg.extractor_channels = vec![16];
    cfg.feature_channels = 16;
    cfg.head_channels = [16, 16];
    let model = Model::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("{} parameters", model.parameter_count());

    let mut det = Detector::for_dataset(model, &train_set)?;
    let frames = pipeline::prepare_frames::<f32>(&train_set);
    let (tr, val) = frames.split_at(50);
    let tcfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let outcome = train::train(&mut det, tr, val, &tcfg, &DecoderConfig::default(), |e| {
        println!("epoch {}  objective {:.4}  val MODA {:.4}", e.epoch, e.mean_objective, e.val.moda)
    })?;

    // same rig, so the warp tables built for training apply unchanged
    let report = pipeline::evaluate(&det, &pipeline::prepare_frames(&test_set), &outcome.decoder)?.report;
    println!("test (tau {:.2}): {}", outcome.decoder.tau, report.summary());
    Ok(())
}
