use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::OccupancyMap;
use crate::scalar::Scalar;

/// A detected pedestrian on the ground plane (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub tau: f64,
    pub nms_radius: f64,
    pub max_detections: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            tau: 0.4,
            nms_radius: 0.5,
            max_detections: 1000,
        }
    }
}

impl DecoderConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.nms_radius > 0.0) {
            return Err(Error::Config(format!("nms radius must be positive, got {}", self.nms_radius)));
        }
        Ok(())
    }
}

/// A cell at or above threshold, in decode order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Cells with `p ≥ tau`, sorted by score descending, ties by `(row, col)`.
pub fn candidates<T: Scalar>(p: &OccupancyMap<T>, tau: f64) -> Vec<Candidate> {
    let grid = &p.grid;
    let mut out: Vec<Candidate> = p
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            let score = v.as_f64();
            (score >= tau).then(|| {
                let (row, col) = (i / grid.cols, i % grid.cols);
                let [x, y] = grid.grid_to_world(row, col);
                Candidate { row, col, x, y, score }
            })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.row, a.col).cmp(&(b.row, b.col))));
    out
}

/// Greedy radius suppression over candidates already in decode order.
pub fn suppress(cands: &[Candidate], radius: f64, max_detections: usize) -> Vec<Detection> {
    let r2 = radius * radius;
    let mut kept: Vec<Detection> = Vec::new();
    for c in cands {
        if kept.len() >= max_detections {
            break;
        }
        if kept.iter().all(|d| (d.x - c.x).powi(2) + (d.y - c.y).powi(2) > r2) {
            kept.push(Detection {
                x: c.x,
                y: c.y,
                score: c.score,
            });
        }
    }
    kept
}

/// Thresholds the map at `tau` and applies greedy NMS with `nms_radius`.
pub fn decode<T: Scalar>(p: &OccupancyMap<T>, cfg: &DecoderConfig) -> Vec<Detection> {
    suppress(&candidates(p, cfg.tau), cfg.nms_radius, cfg.max_detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GroundGrid;

    fn map_with(peaks: &[((usize, usize), f64)]) -> OccupancyMap<f64> {
        let grid = GroundGrid::covering(4.0, 4.0, 0.1).unwrap();
        let mut m = OccupancyMap::zeros(grid);
        for &((r, c), v) in peaks {
            m.values[r * grid.cols + c] = v;
        }
        m
    }

    #[test]
    fn close_peaks_merge() {
        let m = map_with(&[((10, 10), 0.9), ((10, 13), 0.8)]);
        let d = decode(&m, &DecoderConfig::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].score, 0.9);
    }

    #[test]
    fn distant_peaks_survive() {
        let m = map_with(&[((10, 10), 0.9), ((10, 16), 0.8)]);
        assert_eq!(decode(&m, &DecoderConfig::default()).len(), 2);
    }

    #[test]
    fn ties_break_by_position() {
        let m = map_with(&[((10, 12), 0.7), ((10, 10), 0.7)]);
        let d = decode(&m, &DecoderConfig::default());
        assert_eq!(d.len(), 1);
        assert!((d[0].x - 1.05).abs() < 1e-12);
    }

    #[test]
    fn empty_and_cap() {
        let m = map_with(&[]);
        assert!(decode(&m, &DecoderConfig::default()).is_empty());
        let m = map_with(&[((5, 5), 0.9), ((5, 25), 0.8), ((25, 5), 0.7)]);
        let cfg = DecoderConfig {
            max_detections: 2,
            ..DecoderConfig::default()
        };
        assert_eq!(decode(&m, &cfg).len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(DecoderConfig::with_tau(1.0).validate().is_err());
        assert!(DecoderConfig::with_tau(0.0).validate().is_err());
        assert!(DecoderConfig::default().validate().is_ok());
    }
}
