//! Synthetic multi-camera crowd scenes.
//!
//! Pedestrians are camera-facing vertical quads (foot at Z = 0, head at
//! the person's height) painted far to near over a procedurally textured
//! ground. Scenes differ by extent, ground texture, tint and
//! illumination; rigs by camera placement. Every frame is an independent
//! draw, and each camera can lag the reference clock by a small sync
//! offset, which moves walking pedestrians by `offset · velocity` in that
//! view only.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraExtrinsics, CameraIntrinsics, GroundGrid};
use crate::sceneio::{self, CameraRecord, Dataset, Frame, PersonPosition, RgbImage};

/// Minimum camera height (meters); cameras sit above average head height.
pub const MIN_CAMERA_HEIGHT: f64 = 1.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    /// Ground extent along world X (meters).
    pub width: f64,
    /// Ground extent along world Y (meters).
    pub depth: f64,
    pub cell_size: f64,
    pub scene_id: u64,
    /// Global brightness multiplier in `[0.3, 1.0]`.
    pub illumination: f64,
    pub background_seed: u64,
    /// RGB multiplier applied to the ground texture.
    pub tint: [f64; 3],
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0) {
            return Err(Error::Config(format!("scene extent must be positive, got {} x {}", self.width, self.depth)));
        }
        if !(0.3..=1.0).contains(&self.illumination) {
            return Err(Error::Config(format!("illumination {} outside [0.3, 1.0]", self.illumination)));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<GroundGrid> {
        GroundGrid::covering(self.width, self.depth, self.cell_size)
    }

    /// Named desk-scale presets: `demo`/`a` and `b`, `c`, `d` as unseen scenes.
    pub fn preset(name: &str) -> Result<Self> {
        let base = SceneSpec {
            name: name.to_string(),
            width: 8.0,
            depth: 8.0,
            cell_size: 0.2,
            scene_id: 0,
            illumination: 1.0,
            background_seed: 11,
            tint: [1.0, 1.0, 1.0],
        };
        Ok(match name {
            "demo" | "a" => base,
            "b" => SceneSpec {
                width: 9.0,
                depth: 7.0,
                scene_id: 1,
                illumination: 0.8,
                background_seed: 23,
                tint: [1.05, 0.95, 0.85],
                ..base
            },
            "c" => SceneSpec {
                width: 7.0,
                depth: 9.0,
                scene_id: 2,
                illumination: 0.65,
                background_seed: 37,
                tint: [0.85, 1.0, 1.05],
                ..base
            },
            "d" => SceneSpec {
                scene_id: 3,
                illumination: 0.9,
                background_seed: 41,
                tint: [0.95, 0.9, 1.0],
                ..base
            },
            other => return Err(Error::Config(format!("unknown scene preset '{other}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdSpec {
    pub count: usize,
    pub min_separation: f64,
    pub height_range: (f64, f64),
    pub body_width: f64,
    pub appearance_seed: u64,
    pub speed_range: (f64, f64),
    /// Dart-throwing attempts allowed per pedestrian.
    pub max_attempts: usize,
}

impl Default for CrowdSpec {
    fn default() -> Self {
        Self {
            count: 15,
            min_separation: 0.4,
            height_range: (1.5, 1.9),
            body_width: 0.5,
            appearance_seed: 0,
            speed_range: (0.8, 1.6),
            max_attempts: 2000,
        }
    }
}

/// Ring of cameras around the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub n_cameras: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Horizontal field of view in degrees.
    pub hfov_deg: f64,
    pub height_range: (f64, f64),
    /// Distance of the cameras from the scene center, as a multiple of the half diagonal.
    pub radius_factor: f64,
    /// Rotation of the whole ring (degrees); distinguishes configurations.
    pub azimuth_offset_deg: f64,
    /// Look-at jitter around the scene center (meters).
    pub aim_jitter: f64,
    pub sync_jitter: bool,
    pub seed: u64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            n_cameras: 4,
            image_width: 64,
            image_height: 48,
            hfov_deg: 75.0,
            height_range: (4.0, 6.0),
            radius_factor: 1.15,
            azimuth_offset_deg: 45.0,
            aim_jitter: 0.8,
            sync_jitter: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<CameraRecord>,
}

impl CameraRig {
    pub fn build(scene: &SceneSpec, spec: &RigSpec) -> Result<Self> {
        if spec.n_cameras == 0 {
            return Err(Error::Config("a rig needs at least one camera".into()));
        }
        if spec.height_range.0 < MIN_CAMERA_HEIGHT {
            return Err(Error::Config(format!(
                "cameras must sit at least {MIN_CAMERA_HEIGHT} m above the ground"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_ca4e7a5);
        let center = Vector3::new(scene.width / 2.0, scene.depth / 2.0, 0.0);
        let radius = spec.radius_factor * 0.5 * scene.width.hypot(scene.depth);
        let f = (spec.image_width as f64 / 2.0) / (spec.hfov_deg.to_radians() / 2.0).tan();
        let k = CameraIntrinsics::new(
            f,
            f,
            (spec.image_width as f64 - 1.0) / 2.0,
            (spec.image_height as f64 - 1.0) / 2.0,
        )?;
        let mut cameras = Vec::with_capacity(spec.n_cameras);
        for i in 0..spec.n_cameras {
            let az = (spec.azimuth_offset_deg + 360.0 * i as f64 / spec.n_cameras as f64 + rng.gen_range(-10.0..10.0)).to_radians();
            let h = rng.gen_range(spec.height_range.0..=spec.height_range.1);
            let pos = center + Vector3::new(radius * az.cos(), radius * az.sin(), h);
            let aim = center
                + Vector3::new(
                    rng.gen_range(-spec.aim_jitter..=spec.aim_jitter),
                    rng.gen_range(-spec.aim_jitter..=spec.aim_jitter),
                    0.0,
                );
            let e = CameraExtrinsics::look_at(pos, aim)?;
            let sync = if spec.sync_jitter && i > 0 {
                rng.gen_range(20.0..=100.0)
            } else {
                0.0
            };
            cameras.push(CameraRecord {
                id: i,
                name: format!("cam{i}"),
                camera: Camera::new(k, e, spec.image_width, spec.image_height)?,
                sync_offset_ms: sync,
            });
        }
        Ok(Self { cameras })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pedestrian {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub width: f64,
    pub shirt: [f64; 3],
    pub pants: [f64; 3],
    /// Ground velocity (m/s).
    pub velocity: [f64; 2],
}

/// Uniform positions inside `[m, width - m] × [m, depth - m]` with pairwise
/// separation of at least `min_separation`, where `m` is half the body width.
pub fn sample_positions<R: Rng + ?Sized>(crowd: &CrowdSpec, width: f64, depth: f64, rng: &mut R) -> Result<Vec<(f64, f64, usize)>> {
    let m = crowd.body_width / 2.0;
    if crowd.count == 0 {
        return Ok(Vec::new());
    }
    if !(width > 2.0 * m && depth > 2.0 * m) {
        return Err(Error::Capacity {
            placed: 0,
            requested: crowd.count,
        });
    }
    let sep2 = crowd.min_separation * crowd.min_separation;
    let mut out: Vec<(f64, f64, usize)> = Vec::with_capacity(crowd.count);
    for id in 0..crowd.count {
        let mut placed = false;
        for _ in 0..crowd.max_attempts.max(1) {
            let x = rng.gen_range(m..width - m);
            let y = rng.gen_range(m..depth - m);
            if out.iter().all(|&(px, py, _)| (px - x).powi(2) + (py - y).powi(2) >= sep2) {
                out.push((x, y, id));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Capacity {
                placed: out.len(),
                requested: crowd.count,
            });
        }
    }
    Ok(out)
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    // saturated hue so people stand out from the grey ground
    let hue: f64 = rng.gen_range(0.0..6.0);
    let sat: f64 = rng.gen_range(0.65..1.0);
    let val: f64 = rng.gen_range(0.55..1.0);
    let c = val * sat;
    let x = c * (1.0 - ((hue % 2.0) - 1.0).abs());
    let (r, g, b) = match hue as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r + m, g + m, b + m]
}

pub fn sample_pedestrians<R: Rng + ?Sized>(crowd: &CrowdSpec, width: f64, depth: f64, rng: &mut R) -> Result<Vec<Pedestrian>> {
    let positions = sample_positions(crowd, width, depth, rng)?;
    Ok(positions
        .into_iter()
        .map(|(x, y, id)| {
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let speed = rng.gen_range(crowd.speed_range.0..=crowd.speed_range.1);
            let shirt = random_color(rng);
            let pants = random_color(rng).map(|v| v * 0.55);
            Pedestrian {
                id,
                x,
                y,
                height: rng.gen_range(crowd.height_range.0..=crowd.height_range.1),
                width: crowd.body_width,
                shirt,
                pants,
                velocity: [speed * heading.cos(), speed * heading.sin()],
            }
        })
        .collect())
}

fn hash01(seed: u64, a: i64, b: i64) -> f64 {
    let mut z = seed
        .wrapping_add((a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth grey value-noise texture of the ground, lattice spacing 0.5 m.
fn ground_texture(seed: u64, x: f64, y: f64) -> f64 {
    let (gx, gy) = (x / 0.5, y / 0.5);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = hash01(seed, ix, iy);
    let v10 = hash01(seed, ix + 1, iy);
    let v01 = hash01(seed, ix, iy + 1);
    let v11 = hash01(seed, ix + 1, iy + 1);
    let v = (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy;
    0.35 + 0.25 * v
}

/// Background of one camera view: textured ground below the horizon, flat
/// sky above it.
pub fn render_background(camera: &Camera, scene: &SceneSpec) -> Vec<[f64; 3]> {
    let (w, h) = (camera.image_width, camera.image_height);
    let mut out = Vec::with_capacity(w * h);
    let center = camera.center();
    for row in 0..h {
        for col in 0..w {
            let px = camera.homography().image_to_ground(col as f64, row as f64);
            let rgb = match px {
                Ok([x, y]) if camera.homography().ground_to_image(x, y).is_ok() => {
                    let dist = (x - center.x).hypot(y - center.y);
                    let v = ground_texture(scene.background_seed, x, y) * (1.0 - 0.01 * dist.min(30.0));
                    [v * scene.tint[0], v * scene.tint[1], v * scene.tint[2]]
                }
                _ => [0.62 * scene.tint[0], 0.66 * scene.tint[1], 0.72 * scene.tint[2]],
            };
            out.push(rgb);
        }
    }
    out
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Fills a convex quad (corners in order) with `color`.
fn fill_quad(canvas: &mut [[f64; 3]], w: usize, h: usize, quad: [[f64; 2]; 4], color: [f64; 3]) {
    let xs = quad.map(|p| p[0]);
    let ys = quad.map(|p| p[1]);
    let lo_x = xs.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let hi_x = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().min((w - 1) as f64);
    let lo_y = ys.iter().copied().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let hi_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().min((h - 1) as f64);
    if hi_x < 0.0 || hi_y < 0.0 {
        return;
    }
    let area = edge(quad[0], quad[1], quad[2]);
    let sign = if area >= 0.0 { 1.0 } else { -1.0 };
    for y in lo_y..=hi_y as usize {
        for x in lo_x..=hi_x as usize {
            let p = [x as f64, y as f64];
            let inside = (0..4).all(|k| sign * edge(quad[k], quad[(k + 1) % 4], p) >= 0.0);
            if inside {
                canvas[y * w + x] = color;
            }
        }
    }
}

/// Renders pedestrians over `background` for one camera. `sync_offset_ms`
/// shifts each walker along its velocity.
pub fn render_view<R: Rng + ?Sized>(
    camera: &Camera,
    pedestrians: &[Pedestrian],
    scene: &SceneSpec,
    background: &[[f64; 3]],
    sync_offset_ms: f64,
    noise: f64,
    rng: &mut R,
) -> RgbImage {
    let (w, h) = (camera.image_width, camera.image_height);
    let mut canvas = background.to_vec();
    let center = camera.center();
    let dt = sync_offset_ms / 1000.0;
    let mut order: Vec<(f64, Pedestrian)> = pedestrians
        .iter()
        .map(|p| {
            let moved = Pedestrian {
                x: p.x + p.velocity[0] * dt,
                y: p.y + p.velocity[1] * dt,
                ..*p
            };
            ((moved.x - center.x).hypot(moved.y - center.y), moved)
        })
        .collect();
    // far to near
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    let p = camera.projection();
    for (_, ped) in &order {
        let to_cam = [center.x - ped.x, center.y - ped.y];
        let n = to_cam[0].hypot(to_cam[1]).max(1e-9);
        let side = [-to_cam[1] / n * ped.width / 2.0, to_cam[0] / n * ped.width / 2.0];
        let hip = 0.45 * ped.height;
        let corner = |s: f64, z: f64| [ped.x + s * side[0], ped.y + s * side[1], z];
        let project = |pts: [[f64; 3]; 4]| -> Option<[[f64; 2]; 4]> {
            let mut out = [[0.0; 2]; 4];
            for (o, q) in out.iter_mut().zip(pts) {
                *o = p.project(q).ok()?;
            }
            Some(out)
        };
        let legs = project([corner(-1.0, 0.0), corner(1.0, 0.0), corner(1.0, hip), corner(-1.0, hip)]);
        let torso = project([
            corner(-1.0, hip),
            corner(1.0, hip),
            corner(1.0, ped.height),
            corner(-1.0, ped.height),
        ]);
        if let (Some(legs), Some(torso)) = (legs, torso) {
            fill_quad(&mut canvas, w, h, legs, ped.pants);
            fill_quad(&mut canvas, w, h, torso, ped.shirt);
        }
    }
    let mut img = RgbImage::new(w, h);
    for (i, rgb) in canvas.iter().enumerate() {
        for c in 0..3 {
            let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            let v = (rgb[c] * scene.illumination + n).clamp(0.0, 1.0);
            img.data[i * 3 + c] = (v * 255.0).round() as u8;
        }
    }
    img
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_frames: usize,
    pub seed: u64,
    /// Uniform per-pixel sensor noise amplitude in `[0, 1]` units.
    pub pixel_noise: f64,
    /// Id assigned to the first frame.
    pub first_frame: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_frames: 10,
            seed: 0,
            pixel_noise: 0.02,
            first_frame: 0,
        }
    }
}

/// Draws a dataset in memory. Frame `k` only depends on `(specs, seed, k)`.
pub fn generate(scene: &SceneSpec, rig: &CameraRig, crowd: &CrowdSpec, cfg: &GeneratorConfig) -> Result<Dataset> {
    scene.validate()?;
    let grid = scene.grid()?;
    let backgrounds: Vec<Vec<[f64; 3]>> = rig.cameras.iter().map(|c| render_background(&c.camera, scene)).collect();
    let frames: Result<Vec<Frame>> = (0..cfg.n_frames)
        .into_par_iter()
        .map(|k| {
            let frame_id = cfg.first_frame + k;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(frame_id as u64 + 1);
            let peds = sample_pedestrians(crowd, scene.width, scene.depth, &mut rng)?;
            let images = rig
                .cameras
                .iter()
                .zip(&backgrounds)
                .map(|(cam, bg)| render_view(&cam.camera, &peds, scene, bg, cam.sync_offset_ms, cfg.pixel_noise, &mut rng))
                .collect();
            Ok(Frame {
                id: frame_id,
                images,
                ground_truth: peds
                    .iter()
                    .map(|p| PersonPosition {
                        person_id: p.id,
                        x: p.x,
                        y: p.y,
                    })
                    .collect(),
            })
        })
        .collect();
    Ok(Dataset {
        scene: scene.name.clone(),
        grid,
        cameras: rig.cameras.clone(),
        frames: frames?,
    })
}

/// Generates a dataset and writes it to `root` in the on-disk layout.
pub fn generate_dataset(
    scene: &SceneSpec,
    rig: &CameraRig,
    crowd: &CrowdSpec,
    cfg: &GeneratorConfig,
    root: &Path,
) -> Result<Dataset> {
    let ds = generate(scene, rig, crowd, cfg)?;
    sceneio::save_dataset(&ds, root)?;
    Ok(ds)
}
