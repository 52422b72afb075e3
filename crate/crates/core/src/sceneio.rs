//! On-disk formats.
//!
//! A dataset directory holds:
//!
//! ```text
//! manifest.json      format tag, version, scene name, ground grid,
//!                    camera list and per-frame image paths
//! calibration.json   per camera: image size, K as (fx, fy, cx, cy, skew),
//!                    R row-major, t (meters), sync offset (ms)
//! gt.txt             rows `frame_id person_id x_m y_m`
//! images/fNNNNN_cK.ppm  binary 8-bit RGB portable pixmaps
//! ```
//!
//! Floating point values are written in shortest round-trip decimal form,
//! so save → load reproduces every number bit for bit. Checkpoints are a
//! single JSON document with a versioned header, the model config and the
//! named parameter tensors. Occupancy maps export as 8-bit portable
//! graymaps with a plain-text detection sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::autonet::model::{Model, ModelConfig};
use crate::decode::{DecoderConfig, Detection};
use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraExtrinsics, CameraIntrinsics, GroundGrid};
use crate::loss::OccupancyMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DATASET_FORMAT: &str = "groundview-dataset";
pub const CHECKPOINT_FORMAT: &str = "groundview-checkpoint";

/// 8-bit interleaved RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// `3 × H × W` tensor with values in `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let scale = T::one() / T::from_f64_lossy(255.0);
        Tensor::from_fn(&[3, self.height, self.width], |i| {
            let (c, p) = (i / plane, i % plane);
            T::from_f64_lossy(self.data[p * 3 + c] as f64) * scale
        })
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let (magic, w, h, body) = parse_netpbm(bytes)?;
        if magic != "P6" {
            return Err(format!("expected a P6 pixmap, found {magic}"));
        }
        let need = w * h * 3;
        if body.len() < need {
            return Err(format!("truncated pixel data: {} of {need} bytes", body.len()));
        }
        Ok(Self {
            width: w,
            height: h,
            data: body[..need].to_vec(),
        })
    }
}

/// Parses a binary netpbm header with maxval 255; returns the body slice.
fn parse_netpbm(bytes: &[u8]) -> std::result::Result<(String, usize, usize, &[u8]), String> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the body
    pos += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field '{s}'"));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    Ok((tokens[0].clone(), w, h, bytes.get(pos..).unwrap_or(&[])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRecord {
    pub id: usize,
    pub name: String,
    pub camera: Camera,
    pub sync_offset_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonPosition {
    pub person_id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: usize,
    /// One image per dataset camera, in `Dataset::cameras` order.
    pub images: Vec<RgbImage>,
    pub ground_truth: Vec<PersonPosition>,
}

impl Frame {
    pub fn gt_points(&self) -> Vec<[f64; 2]> {
        self.ground_truth.iter().map(|p| [p.x, p.y]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scene: String,
    pub grid: GroundGrid,
    pub cameras: Vec<CameraRecord>,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn camera_ids(&self) -> Vec<usize> {
        self.cameras.iter().map(|c| c.id).collect()
    }

    pub fn camera_index(&self, id: usize) -> Result<usize> {
        self.cameras.iter().position(|c| c.id == id).ok_or(Error::UnknownCamera(id))
    }

    /// Copy restricted to the given cameras, kept in the given order.
    pub fn with_cameras(&self, ids: &[usize]) -> Result<Dataset> {
        let idx: Vec<usize> = ids.iter().map(|&id| self.camera_index(id)).collect::<Result<_>>()?;
        Ok(Dataset {
            scene: self.scene.clone(),
            grid: self.grid,
            cameras: idx.iter().map(|&i| self.cameras[i].clone()).collect(),
            frames: self
                .frames
                .iter()
                .map(|f| Frame {
                    id: f.id,
                    images: idx.iter().map(|&i| f.images[i].clone()).collect(),
                    ground_truth: f.ground_truth.clone(),
                })
                .collect(),
        })
    }

    /// First `n` frames and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.frames.len());
        let part = |frames: &[Frame]| Dataset {
            scene: self.scene.clone(),
            grid: self.grid,
            cameras: self.cameras.clone(),
            frames: frames.to_vec(),
        };
        (part(&self.frames[..n]), part(&self.frames[n..]))
    }

    /// Mean number of cameras seeing each grid cell center.
    pub fn mean_coverage(&self) -> f64 {
        coverage_of(&self.grid, self.cameras.iter().map(|c| &c.camera))
    }
}

pub fn coverage_of<'a>(grid: &GroundGrid, cameras: impl Iterator<Item = &'a Camera> + Clone) -> f64 {
    let mut total = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let [x, y] = grid.grid_to_world(r, c);
            total += cameras.clone().filter(|cam| cam.sees_ground_point(x, y)).count();
        }
    }
    total as f64 / grid.len() as f64
}

#[derive(Serialize, Deserialize)]
struct ManifestCamera {
    id: usize,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestFrame {
    id: usize,
    images: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct DatasetManifest {
    format: String,
    version: u32,
    scene: String,
    grid: GroundGrid,
    calibration: String,
    ground_truth: String,
    cameras: Vec<ManifestCamera>,
    frames: Vec<ManifestFrame>,
}

#[derive(Serialize, Deserialize)]
struct CalibrationEntry {
    id: usize,
    name: String,
    image_width: usize,
    image_height: usize,
    intrinsics: CameraIntrinsics,
    rotation: [f64; 9],
    translation: [f64; 3],
    sync_offset_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    version: u32,
    cameras: Vec<CalibrationEntry>,
}

fn image_name(frame: usize, camera: usize) -> String {
    format!("images/f{frame:05}_c{camera}.ppm")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io("writing", path, e))
}

fn read_file(path: &Path, context: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(context, path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    }
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root.join("images")).map_err(|e| Error::io("creating dataset directory", root, e))?;
    let calibration = CalibrationFile {
        version: DATASET_VERSION,
        cameras: dataset
            .cameras
            .iter()
            .map(|c| {
                let r = c.camera.extrinsics.rotation();
                let t = c.camera.extrinsics.translation();
                CalibrationEntry {
                    id: c.id,
                    name: c.name.clone(),
                    image_width: c.camera.image_width,
                    image_height: c.camera.image_height,
                    intrinsics: c.camera.intrinsics,
                    rotation: [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ],
                    translation: [t.x, t.y, t.z],
                    sync_offset_ms: c.sync_offset_ms,
                }
            })
            .collect(),
    };
    write_file(&root.join("calibration.json"), to_json(&calibration).as_bytes())?;

    let mut gt = String::from("# frame_id person_id x_m y_m\n");
    for f in &dataset.frames {
        for p in &f.ground_truth {
            gt.push_str(&format!("{} {} {} {}\n", f.id, p.person_id, p.x, p.y));
        }
    }
    write_file(&root.join("gt.txt"), gt.as_bytes())?;

    let mut frames = Vec::with_capacity(dataset.frames.len());
    for f in &dataset.frames {
        let mut names = Vec::with_capacity(f.images.len());
        for (cam, img) in dataset.cameras.iter().zip(&f.images) {
            let name = image_name(f.id, cam.id);
            write_file(&root.join(&name), &img.encode_ppm())?;
            names.push(name);
        }
        frames.push(ManifestFrame { id: f.id, images: names });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        scene: dataset.scene.clone(),
        grid: dataset.grid,
        calibration: "calibration.json".into(),
        ground_truth: "gt.txt".into(),
        cameras: dataset
            .cameras
            .iter()
            .map(|c| ManifestCamera {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
        frames,
    };
    write_file(&root.join("manifest.json"), to_json(&manifest).as_bytes())
}

fn parse_gt(path: &Path, text: &str) -> Result<BTreeMap<usize, Vec<PersonPosition>>> {
    let mut out: BTreeMap<usize, Vec<PersonPosition>> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |detail: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            detail,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let frame: usize = fields[0].parse().map_err(|_| bad(format!("bad frame id '{}'", fields[0])))?;
        let person_id: usize = fields[1].parse().map_err(|_| bad(format!("bad person id '{}'", fields[1])))?;
        let x: f64 = fields[2].parse().map_err(|_| bad(format!("bad x '{}'", fields[2])))?;
        let y: f64 = fields[3].parse().map_err(|_| bad(format!("bad y '{}'", fields[3])))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(bad("non-finite coordinate".into()));
        }
        out.entry(frame).or_default().push(PersonPosition { person_id, x, y });
    }
    Ok(out)
}

/// Loads a dataset directory, re-validating all camera invariants.
pub fn load_scene(root: &Path) -> Result<Dataset> {
    let manifest_path = root.join("manifest.json");
    let bytes = read_file(&manifest_path, "reading manifest")?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| json_error(&manifest_path, e))?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::Parse {
            path: manifest_path,
            line: 1,
            detail: format!("unexpected format tag '{}'", manifest.format),
        });
    }
    if manifest.version != DATASET_VERSION {
        return Err(Error::Version {
            path: manifest_path,
            found: manifest.version,
            expected: DATASET_VERSION,
        });
    }
    manifest.grid.validate()?;

    let calib_path = root.join(&manifest.calibration);
    let bytes = read_file(&calib_path, "reading calibration")?;
    let calib: CalibrationFile = serde_json::from_slice(&bytes).map_err(|e| json_error(&calib_path, e))?;
    if calib.version != DATASET_VERSION {
        return Err(Error::Version {
            path: calib_path,
            found: calib.version,
            expected: DATASET_VERSION,
        });
    }
    let mut cameras = Vec::with_capacity(manifest.cameras.len());
    for mc in &manifest.cameras {
        let entry = calib.cameras.iter().find(|c| c.id == mc.id).ok_or_else(|| Error::Parse {
            path: calib_path.clone(),
            line: 0,
            detail: format!("no calibration for camera {} ({})", mc.id, mc.name),
        })?;
        let name_it = |e: Error| match e {
            Error::InvalidExtrinsics { reason, .. } => Error::InvalidExtrinsics {
                camera: Some(format!("{} ({})", entry.id, entry.name)),
                reason,
            },
            Error::InvalidIntrinsics(r) => Error::InvalidIntrinsics(format!("camera {} ({}): {r}", entry.id, entry.name)),
            other => other,
        };
        let r = Matrix3::from_row_slice(&entry.rotation);
        let t = Vector3::from_column_slice(&entry.translation);
        let extrinsics = CameraExtrinsics::new(r, t).map_err(name_it)?;
        entry.intrinsics.validate().map_err(name_it)?;
        let camera = Camera::new(entry.intrinsics, extrinsics, entry.image_width, entry.image_height).map_err(name_it)?;
        if !(0.0..=100.0).contains(&entry.sync_offset_ms) {
            return Err(Error::Parse {
                path: calib_path.clone(),
                line: 0,
                detail: format!("camera {}: sync offset {} ms outside [0, 100]", entry.id, entry.sync_offset_ms),
            });
        }
        cameras.push(CameraRecord {
            id: entry.id,
            name: entry.name.clone(),
            camera,
            sync_offset_ms: entry.sync_offset_ms,
        });
    }

    let gt_path = root.join(&manifest.ground_truth);
    let gt_text = fs::read_to_string(&gt_path).map_err(|e| Error::io("reading ground truth", &gt_path, e))?;
    let mut gt = parse_gt(&gt_path, &gt_text)?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for mf in &manifest.frames {
        if mf.images.len() != cameras.len() {
            return Err(Error::Parse {
                path: manifest_path.clone(),
                line: 0,
                detail: format!("frame {} lists {} images for {} cameras", mf.id, mf.images.len(), cameras.len()),
            });
        }
        let mut images = Vec::with_capacity(cameras.len());
        for (cam, rel) in cameras.iter().zip(&mf.images) {
            let path = root.join(rel);
            let context = format!("reading image for frame {} camera {}", mf.id, cam.id);
            let bytes = read_file(&path, &context)?;
            let img = RgbImage::decode_ppm(&bytes).map_err(|detail| {
                Error::io(
                    context.clone(),
                    &path,
                    std::io::Error::new(std::io::ErrorKind::InvalidData, detail),
                )
            })?;
            if (img.width, img.height) != (cam.camera.image_width, cam.camera.image_height) {
                return Err(Error::Shape(format!(
                    "frame {} camera {}: image is {}x{}, calibration says {}x{}",
                    mf.id, cam.id, img.width, img.height, cam.camera.image_width, cam.camera.image_height
                )));
            }
            images.push(img);
        }
        frames.push(Frame {
            id: mf.id,
            images,
            ground_truth: gt.remove(&mf.id).unwrap_or_default(),
        });
    }
    Ok(Dataset {
        scene: manifest.scene,
        grid: manifest.grid,
        cameras,
        frames,
    })
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    scalar: String,
    config: ModelConfig,
    decoder: DecoderConfig,
    tensors: Vec<TensorRecord>,
}

pub fn checkpoint_string<T: Scalar>(model: &Model<T>, decoder: &DecoderConfig) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        scalar: T::NAME.into(),
        config: model.config.clone(),
        decoder: *decoder,
        tensors: model
            .parameter_names()
            .into_iter()
            .zip(model.parameters())
            .map(|(name, t)| TensorRecord {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect(),
    };
    to_json(&file)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, decoder: &DecoderConfig, path: &Path) -> Result<()> {
    write_file(path, checkpoint_string(model, decoder).as_bytes())
}

/// Loads parameters into a model of scalar type `T` (either precision
/// can be read regardless of the precision it was saved with).
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Model<T>, DecoderConfig)> {
    let bytes = read_file(path, "reading checkpoint")?;
    let file: CheckpointFile = serde_json::from_slice(&bytes).map_err(|e| json_error(path, e))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("unexpected format tag '{}'", file.format),
        });
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut model = Model::<T>::zeroed(file.config)?;
    let names = model.parameter_names();
    let records: BTreeMap<&str, &TensorRecord> = file.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    if records.len() != names.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {} tensors, model needs {}",
            records.len(),
            names.len()
        )));
    }
    for (name, param) in names.iter().zip(model.parameters_mut()) {
        let rec = records
            .get(name.as_str())
            .ok_or_else(|| Error::Shape(format!("checkpoint is missing tensor '{name}'")))?;
        if rec.shape != param.shape() {
            return Err(Error::Shape(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                rec.shape,
                param.shape()
            )));
        }
        *param = Tensor::from_vec(&rec.shape, rec.data.iter().map(|&v| T::from_f64_lossy(v)).collect())?;
    }
    Ok((model, file.decoder))
}

/// 8-bit graymap of a map, one pixel per cell (row 0 first).
pub fn encode_graymap<T: Scalar>(map: &OccupancyMap<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.grid.cols, map.grid.rows).into_bytes();
    out.extend(map.values.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Reads a graymap back as `(rows, cols, values in [0, 1])`.
pub fn decode_graymap(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    let (magic, w, h, body) = parse_netpbm(bytes)?;
    if magic != "P5" {
        return Err(format!("expected a P5 graymap, found {magic}"));
    }
    if body.len() < w * h {
        return Err(format!("truncated pixel data: {} of {} bytes", body.len(), w * h));
    }
    Ok((h, w, body[..w * h].iter().map(|&b| b as f64 / 255.0).collect()))
}

/// Writes `<path>` as a graymap and `<path>.detections.txt` as the sidecar.
pub fn export_occupancy<T: Scalar>(map: &OccupancyMap<T>, detections: &[Detection], path: &Path) -> Result<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io("creating export directory", parent, e))?;
    }
    write_file(path, &encode_graymap(map))?;
    let sidecar = PathBuf::from(format!("{}.detections.txt", path.display()));
    let mut f = fs::File::create(&sidecar).map_err(|e| Error::io("writing", &sidecar, e))?;
    let mut text = String::from("# x_m y_m score\n");
    for d in detections {
        text.push_str(&format!("{} {} {}\n", d.x, d.y, d.score));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io("writing", &sidecar, e))?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_and_truncation() {
        let mut img = RgbImage::new(3, 2);
        img.set_pixel(2, 1, [1, 2, 3]);
        let bytes = img.encode_ppm();
        assert_eq!(RgbImage::decode_ppm(&bytes).unwrap(), img);
        assert!(RgbImage::decode_ppm(&bytes[..bytes.len() - 1]).is_err());
        let t = img.to_tensor::<f64>();
        assert_eq!(t.shape(), &[3, 2, 3]);
        assert_eq!(t.data()[2 * 6 + 5], 3.0 / 255.0);
    }

    #[test]
    fn graymap_quantization() {
        let grid = GroundGrid::new(0.0, 0.0, 1.0, 2, 3).unwrap();
        let m = OccupancyMap::<f64>::new(grid, vec![0.0, 0.1, 0.5, 0.77, 0.999, 1.0]).unwrap();
        let (r, c, v) = decode_graymap(&encode_graymap(&m)).unwrap();
        assert_eq!((r, c), (2, 3));
        for (a, b) in v.iter().zip(&m.values) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn gt_parse_errors_carry_line() {
        let err = parse_gt(Path::new("gt.txt"), "# header\n0 1 0.5 0.5\n0 2 zz 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
