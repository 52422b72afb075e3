//! Consistency check between a dataset's calibration and its images.
//!
//! The background of each camera is estimated as the per-pixel median over
//! all frames (people are respawned every frame, so any pixel is mostly
//! ground). Foreground is whatever differs from it. For every ground-truth
//! person whose image footprint does not overlap anybody else's, the
//! lowest foreground row and the mean foreground column near the foot are
//! compared with the projection of the foot point through the calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::sceneio::{Dataset, RgbImage};

/// Height assumed for the footprint of a person, meters. Generous on purpose.
const MAX_PERSON_HEIGHT: f64 = 2.0;
/// Half body width assumed for the footprint, meters.
const HALF_WIDTH: f64 = 0.3;
/// Per-channel difference (0–255) that marks a pixel as foreground.
const FOREGROUND_THRESHOLD: u8 = 24;
/// Footprints are padded by this many pixels before the overlap test.
const PAD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraResidual {
    pub camera_id: usize,
    pub name: String,
    /// Person observations that were measured.
    pub measured: usize,
    /// Observations skipped: outside the image, overlapping another person,
    /// or not separable from the background.
    pub skipped: usize,
    pub mean_px: f64,
    pub max_px: f64,
}

#[derive(Clone, Copy, Debug)]
struct Footprint {
    u: f64,
    v: f64,
    top: f64,
    half: f64,
    /// Horizontal image shift per row along the person's vertical axis.
    lean: f64,
}

impl Footprint {
    fn of(camera: &Camera, x: f64, y: f64) -> Option<Self> {
        let p = camera.projection();
        let [u, v] = p.project([x, y, 0.0]).ok()?;
        let [u_top, top] = p.project([x, y, MAX_PERSON_HEIGHT]).ok()?;
        let depth = p.depth([x, y, 0.0]);
        let half = HALF_WIDTH * camera.intrinsics.fx / depth;
        let lean = if (top - v).abs() > 1e-9 { (u_top - u) / (top - v) } else { 0.0 };
        Some(Self { u, v, top, half, lean })
    }

    fn overlaps(&self, o: &Footprint) -> bool {
        let (a0, a1) = (self.u - self.half - PAD, self.u + self.half + PAD);
        let (b0, b1) = (o.u - o.half - PAD, o.u + o.half + PAD);
        let (c0, c1) = (self.top.min(self.v) - PAD, self.v.max(self.top) + PAD);
        let (d0, d1) = (o.top.min(o.v) - PAD, o.v.max(o.top) + PAD);
        a0 <= b1 && b0 <= a1 && c0 <= d1 && d0 <= c1
    }
}

fn median_background(images: &[&RgbImage]) -> Vec<u8> {
    let n = images[0].data.len();
    let mut buf = Vec::with_capacity(images.len());
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(images.iter().map(|im| im.data[i]));
            buf.sort_unstable();
            buf[buf.len() / 2]
        })
        .collect()
}

fn is_foreground(img: &RgbImage, bg: &[u8], x: usize, y: usize) -> bool {
    let i = (y * img.width + x) * 3;
    (0..3).any(|c| img.data[i + c].abs_diff(bg[i + c]) > FOREGROUND_THRESHOLD)
}

/// Residual between the rendered foot of a person and its projection, or
/// `None` when no foreground is found near the foot.
///
/// Vertically, the lowest foreground pixel in the foot's column is compared
/// with the foot (a pixel is painted when its center lies above the bottom
/// edge, so that edge is estimated at the pixel's lower half). Horizontally,
/// the midpoint of the foreground run one row above the foot is compared
/// with the person's projected vertical axis at that row.
fn measure(img: &RgbImage, bg: &[u8], f: &Footprint) -> Option<f64> {
    let (w, h) = (img.width, img.height);
    let col = f.u.round() as usize;
    let y0 = (f.v - 2.0 * PAD).floor().max(0.0) as usize;
    let y1 = ((f.v + PAD).ceil() as usize).min(h - 1);
    let bottom = (y0..=y1).rev().find(|&y| is_foreground(img, bg, col, y))?;
    let v_meas = bottom as f64 + 0.5;

    let row = bottom.saturating_sub(1);
    if !is_foreground(img, bg, col, row) {
        return None;
    }
    let mut left = col;
    while left > 0 && is_foreground(img, bg, left - 1, row) {
        left -= 1;
    }
    let mut right = col;
    while right + 1 < w && is_foreground(img, bg, right + 1, row) {
        right += 1;
    }
    // a run touching another painted region is not this person's outline
    if (right - left) as f64 > 2.0 * f.half + 2.0 {
        return None;
    }
    let u_meas = 0.5 * (left + right) as f64;
    let u_axis = f.u + (row as f64 - f.v) * f.lean;
    Some((u_meas - u_axis).hypot(v_meas - f.v))
}

/// Per-camera residuals in pixels. Needs at least three frames for the
/// background estimate.
pub fn reprojection_residuals(dataset: &Dataset) -> Result<Vec<CameraResidual>> {
    if dataset.frames.len() < 3 {
        return Err(Error::Config(format!(
            "calibration check needs at least 3 frames, dataset has {}",
            dataset.frames.len()
        )));
    }
    let mut out = Vec::with_capacity(dataset.cameras.len());
    for (k, rec) in dataset.cameras.iter().enumerate() {
        let cam = &rec.camera;
        let images: Vec<&RgbImage> = dataset.frames.iter().map(|f| &f.images[k]).collect();
        let bg = median_background(&images);
        let (mut sum, mut max, mut measured, mut skipped) = (0.0, 0.0f64, 0, 0);
        for frame in &dataset.frames {
            let feet: Vec<Option<Footprint>> = frame.ground_truth.iter().map(|g| Footprint::of(cam, g.x, g.y)).collect();
            for (i, f) in feet.iter().enumerate() {
                let Some(f) = f else {
                    skipped += 1;
                    continue;
                };
                let inside = f.u >= f.half + 1.0
                    && f.u <= cam.image_width as f64 - 2.0 - f.half
                    && f.v >= 1.0
                    && f.v <= cam.image_height as f64 - 2.0;
                let isolated = feet
                    .iter()
                    .enumerate()
                    .all(|(j, o)| j == i || o.as_ref().map_or(true, |o| !f.overlaps(o)));
                match (inside && isolated).then(|| measure(&frame.images[k], &bg, f)).flatten() {
                    Some(r) => {
                        sum += r;
                        max = max.max(r);
                        measured += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        out.push(CameraResidual {
            camera_id: rec.id,
            name: rec.name.clone(),
            measured,
            skipped,
            mean_px: if measured > 0 { sum / measured as f64 } else { 0.0 },
            max_px: max,
        });
    }
    Ok(out)
}
