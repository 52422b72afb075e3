//! Optional TOML configuration file. Every key mirrors a command-line flag;
//! a flag given on the command line always wins over the file, and the
//! file wins over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub scene: Option<String>,
    pub cameras: Option<usize>,
    pub frames: Option<usize>,
    pub first_frame: Option<usize>,
    pub people: Option<usize>,
    pub image_width: Option<usize>,
    pub image_height: Option<usize>,
    pub hfov: Option<f64>,
    pub rig_seed: Option<u64>,
    pub sync_jitter: Option<bool>,
    pub noise: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub dropview: Option<bool>,
    pub loss: Option<String>,
    pub max_lr: Option<f64>,
    pub channels: Option<usize>,
    pub tau: Option<f64>,
    pub patience: Option<usize>,
    pub val_frames: Option<usize>,
    pub target_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub tau: Option<f64>,
    pub gate: Option<f64>,
    pub nms_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub seeds: Option<usize>,
    pub train_frames: Option<usize>,
    pub val_frames: Option<usize>,
    pub test_frames: Option<usize>,
    pub epochs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Resolves one setting and records it for the startup echo.
pub struct Resolver {
    pub lines: Vec<String>,
}

impl Resolver {
    pub fn new() -> Self {
        Self { lines: Vec::new() }
    }

    pub fn pick<T: Clone + std::fmt::Debug>(&mut self, key: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "config"),
            (None, None) => (default, "default"),
        };
        self.lines.push(format!("{key} = {v:?} ({src})"));
        v
    }

    pub fn pick_opt<T: Clone + std::fmt::Debug>(&mut self, key: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (Some(v), "flag"),
            (None, Some(v)) => (Some(v), "config"),
            (None, None) => (None, "default"),
        };
        self.lines.push(format!("{key} = {v:?} ({src})"));
        v
    }

    pub fn echo(&self) {
        for l in &self.lines {
            eprintln!("resolved {l}");
        }
    }
}
