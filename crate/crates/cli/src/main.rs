//! `groundview` command-line tool: dataset generation, training,
//! evaluation, inference, calibration checks, τ tuning and benchmarks.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groundview::autonet::train::{self, TrainConfig};
use groundview::bench::{self, BenchPlan};
use groundview::pipeline::{self, PreparedFrame};
use groundview::synthgen::{self, CameraRig, CrowdSpec, GeneratorConfig, RigSpec, SceneSpec};
use groundview::{calib, decode, metrics, sceneio, Dataset, DecoderConfig, Detector, LossKind, Model, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{ConfigFile, Resolver};

/// Environment variable holding the default data root.
const DATA_ENV: &str = "GROUNDVIEW_DATA";

#[derive(Parser, Debug)]
#[command(name = "groundview", version, about = "Multi-view pedestrian detection on a ground-plane occupancy grid")]
struct Cli {
    /// Seed for every random choice (data, initialization, sample order).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with default values for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-camera dataset.
    Gen(GenArgs),
    /// Train a model on a dataset and write a checkpoint plus a loss log.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print MODA, MODP, precision and recall.
    Eval(EvalArgs),
    /// Export occupancy maps and detections for every frame.
    Infer(InferArgs),
    /// Compare rendered pedestrians with the projection of their ground truth.
    CalibCheck(CalibArgs),
    /// Run the camera-subset, rig-transfer and scene-transfer protocols.
    Bench(BenchArgs),
    /// Pick the detection threshold that maximizes MODA on a dataset.
    TuneTau(TuneArgs),
}

#[derive(Args, Debug)]
struct DataArg {
    /// Dataset directory [default: $GROUNDVIEW_DATA, else ./data].
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Selection {
    /// Comma-separated camera ids to use (default: all).
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<usize>>,
    /// Frame range START:END over the dataset's frame list (END exclusive).
    #[arg(long)]
    range: Option<String>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    data: DataArg,
    /// Scene preset: demo (alias a), b, c or d.
    #[arg(long)]
    scene: Option<String>,
    /// Number of cameras in the ring.
    #[arg(long)]
    cameras: Option<usize>,
    /// Number of frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Index of the first frame (frames are independent draws).
    #[arg(long)]
    first_frame: Option<usize>,
    /// Pedestrians per frame.
    #[arg(long)]
    people: Option<usize>,
    #[arg(long)]
    image_width: Option<usize>,
    #[arg(long)]
    image_height: Option<usize>,
    /// Horizontal field of view in degrees.
    #[arg(long)]
    hfov: Option<f64>,
    /// Seed of the camera placement [default: --seed].
    #[arg(long)]
    rig_seed: Option<u64>,
    /// Disable the per-camera capture time offsets.
    #[arg(long)]
    no_sync_jitter: bool,
    /// Amplitude of uniform pixel noise (0–1 scale).
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    sel: Selection,
    /// Checkpoint to write [default: <data>/model.json].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss log to write [default: <out>.loss.tsv].
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Drop one random view from every training sample.
    #[arg(long)]
    dropview: bool,
    /// Training objective: klcc, kl, cc or mse.
    #[arg(long)]
    loss: Option<String>,
    /// Peak learning rate of the one-cycle schedule.
    #[arg(long)]
    max_lr: Option<f64>,
    /// Feature channels C of the extractor output.
    #[arg(long)]
    channels: Option<usize>,
    /// Fixed detection threshold; disables validation tuning.
    #[arg(long)]
    tau: Option<f64>,
    /// Epochs without validation MODA gain before stopping (0 disables).
    #[arg(long)]
    patience: Option<usize>,
    /// Frames held out from the end of the selection for validation.
    #[arg(long)]
    val_frames: Option<usize>,
    /// Standard deviation of the target Gaussians, meters.
    #[arg(long)]
    target_sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Checkpoint [default: <data>/model.json].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override the checkpoint's detection threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// NMS radius in meters.
    #[arg(long)]
    nms_radius: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    sel: Selection,
    #[command(flatten)]
    dec: DecodeArgs,
    /// Match gate in meters.
    #[arg(long)]
    gate: Option<f64>,
    /// Write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write per-frame rows (frame tp fp fn modp_sum).
    #[arg(long)]
    rows: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    sel: Selection,
    #[command(flatten)]
    dec: DecodeArgs,
    /// Output directory for the graymaps and detection sidecars.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CalibArgs {
    #[command(flatten)]
    data: DataArg,
    /// Fail when any residual exceeds this many pixels.
    #[arg(long, default_value_t = 2.0)]
    max_residual: f64,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    sel: Selection,
    /// Checkpoint [default: <data>/model.json].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Store the best threshold in the checkpoint.
    #[arg(long)]
    update: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Number of seeds (0, 1, … offset by --seed).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    train_frames: Option<usize>,
    #[arg(long)]
    val_frames: Option<usize>,
    #[arg(long)]
    test_frames: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Directory for report.txt and rows.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Core(groundview::Error),
    Calibration(String),
}

impl From<groundview::Error> for CliError {
    fn from(e: groundview::Error) -> Self {
        match e {
            groundview::Error::Config(msg) => CliError::Usage(msg),
            e => CliError::Core(e),
        }
    }
}

impl CliError {
    fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.class(),
            CliError::Calibration(_) => "calibration",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            _ => 3,
        }
    }

    fn detail(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Calibration(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(context: &str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(groundview::Error::Io {
        context: context.into(),
        path: path.into(),
        source: e,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err("creating directory", dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err("writing", path, e))
}

struct Ctx {
    file: ConfigFile,
    res: Resolver,
    seed: u64,
}

impl Ctx {
    fn data_root(&mut self, flag: Option<PathBuf>) -> PathBuf {
        let env = std::env::var_os(DATA_ENV).map(PathBuf::from);
        let default = env.unwrap_or_else(|| PathBuf::from("data"));
        self.res.pick("data", flag, self.file.data.clone(), default)
    }
}

fn parse_range(spec: &str, n: usize) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--range expects START:END, got {spec:?}"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let start = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
    let end = if b.is_empty() { n } else { b.parse().map_err(|_| bad())? };
    if start >= end || end > n {
        return Err(CliError::Usage(format!("frame range {start}:{end} is empty or exceeds {n} frames")));
    }
    Ok((start, end))
}

/// Loads a dataset restricted to the selected cameras and frame range.
fn load_selection(root: &Path, sel: &Selection, res: &mut Resolver) -> CliResult<Dataset> {
    let mut ds = sceneio::load_scene(root)?;
    if let Some(ids) = &sel.cameras {
        ds = ds.with_cameras(ids)?;
    }
    if let Some(r) = &sel.range {
        let (a, b) = parse_range(r, ds.frames.len())?;
        ds.frames = ds.frames[a..b].to_vec();
    }
    res.lines.push(format!("cameras = {:?}", ds.camera_ids()));
    res.lines.push(format!("frames = {}", ds.frames.len()));
    Ok(ds)
}

fn cmd_gen(ctx: &mut Ctx, a: GenArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    let g = &ctx.file.gen;
    let r = &mut ctx.res;
    let scene_name = r.pick("scene", a.scene, g.scene.clone(), "demo".into());
    let n_cameras = r.pick("cameras", a.cameras, g.cameras, 4);
    let n_frames = r.pick("frames", a.frames, g.frames, 100);
    let first_frame = r.pick("first_frame", a.first_frame, g.first_frame, 0);
    let people = r.pick("people", a.people, g.people, CrowdSpec::default().count);
    let rig_default = RigSpec::default();
    let image_width = r.pick("image_width", a.image_width, g.image_width, rig_default.image_width);
    let image_height = r.pick("image_height", a.image_height, g.image_height, rig_default.image_height);
    let hfov = r.pick("hfov", a.hfov, g.hfov, rig_default.hfov_deg);
    let rig_seed = r.pick("rig_seed", a.rig_seed, g.rig_seed, ctx.seed);
    let sync_jitter = r.pick("sync_jitter", a.no_sync_jitter.then_some(false), g.sync_jitter, true);
    let noise = r.pick("noise", a.noise, g.noise, GeneratorConfig::default().pixel_noise);
    r.echo();

    let scene = SceneSpec::preset(&scene_name)?;
    let rig = CameraRig::build(
        &scene,
        &RigSpec {
            n_cameras,
            image_width,
            image_height,
            hfov_deg: hfov,
            seed: rig_seed,
            sync_jitter,
            ..rig_default
        },
    )?;
    let crowd = CrowdSpec {
        count: people,
        appearance_seed: ctx.seed,
        ..CrowdSpec::default()
    };
    let cfg = GeneratorConfig {
        n_frames,
        seed: ctx.seed,
        pixel_noise: noise,
        first_frame,
    };
    let ds = synthgen::generate_dataset(&scene, &rig, &crowd, &cfg, &root)?;
    println!(
        "wrote {} frames x {} cameras to {} (grid {}x{}, mean coverage {:.2})",
        ds.frames.len(),
        ds.cameras.len(),
        root.display(),
        ds.grid.rows,
        ds.grid.cols,
        ds.mean_coverage()
    );
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, a: TrainArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    let t = &ctx.file.train;
    let r = &mut ctx.res;
    let defaults = TrainConfig::default();
    let out = r.pick("out", a.out, None, root.join("model.json"));
    let log = r.pick("log", a.log, None, PathBuf::from(format!("{}.loss.tsv", out.display())));
    let epochs = r.pick("epochs", a.epochs, t.epochs, defaults.epochs);
    let dropview = r.pick("dropview", a.dropview.then_some(true), t.dropview, false);
    let loss_name = r.pick("loss", a.loss, t.loss.clone(), defaults.loss.to_string());
    let loss: LossKind = loss_name.parse()?;
    let max_lr = r.pick("max_lr", a.max_lr, t.max_lr, defaults.max_lr);
    let channels = r.pick_opt("channels", a.channels, t.channels);
    let tau = r.pick_opt("tau", a.tau, t.tau);
    let patience = r.pick("patience", a.patience, t.patience, defaults.patience.unwrap_or(0));
    let val_flag = r.pick_opt("val_frames", a.val_frames, t.val_frames);
    let target_sigma = r.pick("target_sigma", a.target_sigma, t.target_sigma, defaults.target_sigma);
    let ds = load_selection(&root, &a.sel, r)?;
    let n = ds.frames.len();
    let val_frames = val_flag.unwrap_or((n / 10).max(1));
    if val_frames >= n {
        return Err(CliError::Usage(format!("{val_frames} validation frames leave nothing to train on ({n} frames)")));
    }
    r.lines.push(format!("val_frames = {val_frames}"));
    let cfg = TrainConfig {
        epochs,
        dropview,
        loss,
        max_lr,
        seed: ctx.seed,
        target_sigma,
        patience: (patience > 0).then_some(patience),
        ..defaults
    };
    r.lines.push(format!("train_config = {cfg:?}"));
    let cam = &ds.cameras[0].camera;
    let mut model_cfg = ModelConfig::new(cam.image_height, cam.image_width, ds.grid.rows, ds.grid.cols);
    if let Some(c) = channels {
        model_cfg.feature_channels = c;
    }
    r.lines.push(format!("model_config = {model_cfg:?}"));
    r.echo();

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let model = Model::<f32>::new(model_cfg, &mut rng)?;
    let mut det = Detector::for_dataset(model, &ds)?;
    let frames = pipeline::prepare_frames::<f32>(&ds);
    let (tr, val) = frames.split_at(n - val_frames);
    let decoder = DecoderConfig::default();
    let outcome = train::train(&mut det, tr, val, &cfg, &decoder, |e| {
        eprintln!(
            "epoch {:>2}  objective {:+.4}  val tau {:.2}  {}",
            e.epoch,
            e.mean_objective,
            e.val_tau,
            e.val.summary()
        );
    })?;
    let decoder = match tau {
        Some(tau) => DecoderConfig { tau, ..outcome.decoder },
        None => outcome.decoder,
    };
    decoder.validate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err("creating directory", dir, e))?;
    }
    sceneio::save_checkpoint(&det.model, &decoder, &out)?;
    write_file(&log, outcome.loss_log().as_bytes())?;
    println!(
        "best epoch {} of {}; tau {}; checkpoint {}; loss log {}",
        outcome.best_epoch,
        outcome.epochs.len(),
        decoder.tau,
        out.display(),
        log.display()
    );
    Ok(())
}

/// Loads the checkpoint and applies decoder overrides.
fn load_model(ctx: &mut Ctx, root: &Path, dec: &DecodeArgs) -> CliResult<(Model<f32>, DecoderConfig)> {
    let e = &ctx.file.eval;
    let r = &mut ctx.res;
    let path = r.pick("checkpoint", dec.checkpoint.clone(), None, root.join("model.json"));
    let (model, mut decoder) = sceneio::load_checkpoint::<f32>(&path)?;
    decoder.tau = r.pick("tau", dec.tau, e.tau, decoder.tau);
    decoder.nms_radius = r.pick("nms_radius", dec.nms_radius, e.nms_radius, decoder.nms_radius);
    decoder.validate()?;
    Ok((model, decoder))
}

fn cmd_eval(ctx: &mut Ctx, a: EvalArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    let (model, decoder) = load_model(ctx, &root, &a.dec)?;
    let gate = ctx.res.pick("gate", a.gate, ctx.file.eval.gate, metrics::DEFAULT_GATE);
    let ds = load_selection(&root, &a.sel, &mut ctx.res)?;
    ctx.res.echo();
    let det = Detector::for_dataset(model, &ds)?;
    let frames = pipeline::prepare_frames::<f32>(&ds);
    let preds = pipeline::predict_all(&det, &frames)?;
    let ev = pipeline::score_predictions(&preds, &frames, &decoder, gate)?;
    let r = &ev.report;
    println!("MODA   {:.4}", r.moda);
    println!("MODP   {:.4}", r.modp);
    println!("Prec   {:.4}", r.precision);
    println!("Recall {:.4}", r.recall);
    println!("{}", r.summary());
    if let Some(path) = a.report {
        let json = serde_json::to_string_pretty(r).expect("report serializes");
        write_file(&path, json.as_bytes())?;
    }
    if let Some(path) = a.rows {
        let mut s = String::from("frame\ttp\tfp\tfn\tmodp_sum\n");
        for row in &ev.rows {
            s.push_str(&row.to_line());
            s.push('\n');
        }
        write_file(&path, s.as_bytes())?;
    }
    Ok(())
}

fn cmd_infer(ctx: &mut Ctx, a: InferArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    let (model, decoder) = load_model(ctx, &root, &a.dec)?;
    let ds = load_selection(&root, &a.sel, &mut ctx.res)?;
    ctx.res.lines.push(format!("out = {}", a.out.display()));
    ctx.res.echo();
    std::fs::create_dir_all(&a.out).map_err(|e| io_err("creating directory", &a.out, e))?;
    let det = Detector::for_dataset(model, &ds)?;
    let frames: Vec<PreparedFrame<f32>> = pipeline::prepare_frames(&ds);
    let mut total = 0;
    for f in &frames {
        let map = det.predict_frame(f)?;
        let dets = decode::decode(&map, &decoder);
        total += dets.len();
        sceneio::export_occupancy(&map, &dets, &a.out.join(format!("f{:05}.pgm", f.frame_id)))?;
    }
    println!("exported {} occupancy maps with {} detections to {}", frames.len(), total, a.out.display());
    Ok(())
}

fn cmd_calib(ctx: &mut Ctx, a: CalibArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    ctx.res.lines.push(format!("max_residual = {}", a.max_residual));
    ctx.res.echo();
    let ds = sceneio::load_scene(&root)?;
    let rows = calib::reprojection_residuals(&ds)?;
    println!("camera\tname\tmeasured\tskipped\tmean_px\tmax_px");
    let mut worst = 0.0f64;
    for r in &rows {
        println!("{}\t{}\t{}\t{}\t{:.3}\t{:.3}", r.camera_id, r.name, r.measured, r.skipped, r.mean_px, r.max_px);
        worst = worst.max(r.max_px);
    }
    let measured: usize = rows.iter().map(|r| r.measured).sum();
    println!("max residual {worst:.3} px over {measured} observations");
    if measured == 0 {
        return Err(CliError::Calibration("no isolated pedestrian could be measured".into()));
    }
    if worst > a.max_residual {
        return Err(CliError::Calibration(format!(
            "max residual {worst:.3} px exceeds {} px",
            a.max_residual
        )));
    }
    Ok(())
}

fn cmd_tune(ctx: &mut Ctx, a: TuneArgs) -> CliResult<()> {
    let root = ctx.data_root(a.data.data);
    let path = ctx.res.pick("checkpoint", a.checkpoint, None, root.join("model.json"));
    let ds = load_selection(&root, &a.sel, &mut ctx.res)?;
    ctx.res.echo();
    let (model, decoder) = sceneio::load_checkpoint::<f32>(&path)?;
    let det = Detector::for_dataset(model, &ds)?;
    let frames = pipeline::prepare_frames::<f32>(&ds);
    let preds = pipeline::predict_all(&det, &frames)?;
    let (best, sweep) = pipeline::tune_tau(&preds, &frames, &decoder)?;
    println!("tau\tMODA\tMODP\tPrec\tRecall");
    for (tau, r) in &sweep {
        println!("{tau:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.4}", r.moda, r.modp, r.precision, r.recall);
    }
    println!("best tau {best}");
    if a.update {
        sceneio::save_checkpoint(&det.model, &DecoderConfig { tau: best, ..decoder }, &path)?;
        println!("updated {}", path.display());
    }
    Ok(())
}

fn cmd_bench(ctx: &mut Ctx, a: BenchArgs) -> CliResult<()> {
    let b = &ctx.file.bench;
    let r = &mut ctx.res;
    let mut plan = BenchPlan::desk()?;
    let n_seeds = r.pick("seeds", a.seeds, b.seeds, plan.seeds.len());
    plan.seeds = (0..n_seeds as u64).map(|k| ctx.seed + k).collect();
    plan.train_frames = r.pick("train_frames", a.train_frames, b.train_frames, plan.train_frames);
    plan.val_frames = r.pick("val_frames", a.val_frames, b.val_frames, plan.val_frames);
    plan.test_frames = r.pick("test_frames", a.test_frames, b.test_frames, plan.test_frames);
    plan.train.epochs = r.pick("epochs", a.epochs, b.epochs, plan.train.epochs);
    r.lines.push(format!("plan = {plan:?}"));
    r.echo();
    let results = bench::run_plan::<f32>(&plan)?;
    let text = bench::report(&results);
    println!("{text}");
    if let Some(dir) = a.out {
        let mut rows = String::new();
        for s in &results {
            let tag = |t: &str| format!("{t}/seed{}", s.seed);
            let subsets: Vec<_> = s
                .plain_subsets
                .iter()
                .map(|(ids, m)| (format!("plain {ids:?}"), m.clone()))
                .chain(s.dropview_subsets.iter().map(|(ids, m)| (format!("dropview {ids:?}"), m.clone())))
                .collect();
            rows.push_str(&bench::machine_rows(&tag("cameras"), &subsets));
            let mut cross = Vec::new();
            for (name, t) in [("plain", &s.plain), ("dropview", &s.dropview)] {
                cross.extend(t.rows().into_iter().map(|(k, m)| (format!("{name} {k}"), m)));
            }
            rows.push_str(&bench::machine_rows(&tag("config"), &cross));
            let mut scene = vec![
                ("seen".to_string(), s.scene.seen.clone()),
                ("unseen".to_string(), s.scene.unseen.clone()),
            ];
            if let Some(m) = &s.scene.unseen_extra_camera {
                scene.push(("unseen+1cam".to_string(), m.clone()));
            }
            rows.push_str(&bench::machine_rows(&tag("scene"), &scene));
        }
        write_file(&dir.join("report.txt"), text.as_bytes())?;
        let mut header = String::new();
        writeln!(header, "table\tmethod\tMODA\tMODP\tPrec\tRecall").expect("string write");
        write_file(&dir.join("rows.tsv"), (header + &rows).as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(CliError::Usage)?,
        None => ConfigFile::default(),
    };
    let mut res = Resolver::new();
    let seed = res.pick("seed", cli.seed, file.seed, 0);
    let threads = res.pick_opt("threads", cli.threads, file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut ctx = Ctx { file, res, seed };
    match cli.command {
        Command::Gen(a) => cmd_gen(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Infer(a) => cmd_infer(&mut ctx, a),
        Command::CalibCheck(a) => cmd_calib(&mut ctx, a),
        Command::Bench(a) => cmd_bench(&mut ctx, a),
        Command::TuneTau(a) => cmd_tune(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]", e.class());
            eprintln!("{}", e.detail());
            ExitCode::from(e.exit_code())
        }
    }
}
