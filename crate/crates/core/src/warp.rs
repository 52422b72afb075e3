//! Inverse warping of per-view feature maps onto the ground grid.
//!
//! For every ground cell the cell center is pushed through the view's
//! ground homography (expressed in feature-map pixels) and the feature map
//! is sampled bilinearly there. Cells whose sample falls outside
//! `[0, W_f - 1] × [0, H_f - 1]`, or behind the camera, are zero and
//! masked out. The sampling pattern only depends on the homography, the
//! grid and the feature dimensions, so it is precomputed once per camera
//! as a [`WarpTable`].

use crate::error::{Error, Result};
use crate::geometry::{GroundGrid, Homography, BEHIND_CAMERA_EPS};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `C × H_f × W_f` feature map extracted from one camera view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewFeatureMap<T> {
    pub data: Tensor<T>,
    pub view_id: usize,
}

/// `C × H_g × W_g` features on the ground grid, plus per-cell coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedFeatureMap<T> {
    pub data: Tensor<T>,
    pub mask: Vec<bool>,
    pub view_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Tap<T> {
    cell: usize,
    src: [usize; 4],
    weight: [T; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpTable<T> {
    grid: GroundGrid,
    feature_height: usize,
    feature_width: usize,
    taps: Vec<Tap<T>>,
    mask: Vec<bool>,
}

impl<T: Scalar> WarpTable<T> {
    /// `homography` must map ground meters to *feature-map* pixels.
    pub fn new(homography: &Homography, grid: &GroundGrid, feature_height: usize, feature_width: usize) -> Result<Self> {
        grid.validate()?;
        if feature_height == 0 || feature_width == 0 {
            return Err(Error::Shape("feature map must be non-empty".into()));
        }
        let (fh, fw) = (feature_height, feature_width);
        let mut taps = Vec::new();
        let mut mask = vec![false; grid.len()];
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let [x, y] = grid.grid_to_world(row, col);
                let [hu, hv, s] = homography.apply_homogeneous(x, y);
                if s <= BEHIND_CAMERA_EPS {
                    continue;
                }
                let (u, v) = (hu / s, hv / s);
                if !(u >= 0.0 && v >= 0.0 && u <= (fw - 1) as f64 && v <= (fh - 1) as f64) {
                    continue;
                }
                let (x0, x1, ax) = axis_taps(u, fw);
                let (y0, y1, ay) = axis_taps(v, fh);
                let cell = row * grid.cols + col;
                mask[cell] = true;
                let w = |a: f64| T::from_f64_lossy(a);
                taps.push(Tap {
                    cell,
                    src: [y0 * fw + x0, y0 * fw + x1, y1 * fw + x0, y1 * fw + x1],
                    weight: [
                        w((1.0 - ax) * (1.0 - ay)),
                        w(ax * (1.0 - ay)),
                        w((1.0 - ax) * ay),
                        w(ax * ay),
                    ],
                });
            }
        }
        Ok(Self {
            grid: *grid,
            feature_height,
            feature_width,
            taps,
            mask,
        })
    }

    pub fn grid(&self) -> &GroundGrid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn covered_cells(&self) -> usize {
        self.taps.len()
    }

    fn check_features(&self, fm: &Tensor<T>) -> Result<usize> {
        let (c, h, w) = fm.chw()?;
        if (h, w) != (self.feature_height, self.feature_width) {
            return Err(Error::Shape(format!(
                "warp table built for {}x{} features, got {h}x{w}",
                self.feature_height, self.feature_width
            )));
        }
        Ok(c)
    }

    pub fn apply(&self, fm: &ViewFeatureMap<T>) -> Result<ProjectedFeatureMap<T>> {
        let c = self.check_features(&fm.data)?;
        let cells = self.grid.len();
        let mut out = vec![T::zero(); c * cells];
        for ch in 0..c {
            let src = fm.data.channel(ch);
            let dst = &mut out[ch * cells..(ch + 1) * cells];
            for tap in &self.taps {
                dst[tap.cell] = tap.weight[0] * src[tap.src[0]]
                    + tap.weight[1] * src[tap.src[1]]
                    + tap.weight[2] * src[tap.src[2]]
                    + tap.weight[3] * src[tap.src[3]];
            }
        }
        Ok(ProjectedFeatureMap {
            data: Tensor::from_vec(&[c, self.grid.rows, self.grid.cols], out)?,
            mask: self.mask.clone(),
            view_id: fm.view_id,
        })
    }

    /// Vector-Jacobian product: scatters a ground-plane gradient back to
    /// feature-map pixels.
    pub fn backward(&self, grad_ground: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, rows, cols) = grad_ground.chw()?;
        if (rows, cols) != (self.grid.rows, self.grid.cols) {
            return Err(Error::Shape(format!(
                "ground gradient is {rows}x{cols}, grid is {}x{}",
                self.grid.rows, self.grid.cols
            )));
        }
        let cells = self.grid.len();
        let plane = self.feature_height * self.feature_width;
        let mut dx = vec![T::zero(); c * plane];
        for ch in 0..c {
            let g = grad_ground.channel(ch);
            let d = &mut dx[ch * plane..(ch + 1) * plane];
            for tap in &self.taps {
                let gv = g[tap.cell];
                for k in 0..4 {
                    d[tap.src[k]] += tap.weight[k] * gv;
                }
            }
        }
        debug_assert_eq!(cells * c, grad_ground.len());
        Tensor::from_vec(&[c, self.feature_height, self.feature_width], dx)
    }
}

/// Lower/upper sample index and blend factor along one axis; `pos` is
/// already known to lie in `[0, len - 1]`.
fn axis_taps(pos: f64, len: usize) -> (usize, usize, f64) {
    if len == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (pos.floor() as usize).min(len - 2);
    (i0, i0 + 1, pos - i0 as f64)
}

/// One-shot warp; builds the sampling table and applies it.
pub fn warp_to_ground<T: Scalar>(
    fm: &ViewFeatureMap<T>,
    homography: &Homography,
    grid: &GroundGrid,
) -> Result<ProjectedFeatureMap<T>> {
    let (_, h, w) = fm.data.chw()?;
    WarpTable::new(homography, grid, h, w)?.apply(fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Camera, CameraExtrinsics, CameraIntrinsics};
    use nalgebra::{Matrix3, Vector3};

    fn downward() -> Camera {
        let k = CameraIntrinsics::new(10.0, 10.0, 8.0, 6.0).unwrap();
        let e = CameraExtrinsics::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)), Vector3::new(0.0, 0.0, 10.0))
            .unwrap();
        Camera::new(k, e, 17, 13).unwrap()
    }

    #[test]
    fn constant_map_projects_to_mask() {
        let cam = downward();
        // 1 px = 1 m with this camera; grid of 0.5 m cells around the origin
        let grid = GroundGrid::new(-10.0, -10.0, 0.5, 41, 41).unwrap();
        let fm = ViewFeatureMap {
            data: Tensor::<f64>::full(&[2, 13, 17], 1.0),
            view_id: 0,
        };
        let out = warp_to_ground(&fm, cam.homography(), &grid).unwrap();
        let cells = grid.len();
        let mut covered = 0;
        for ch in 0..2 {
            for cell in 0..cells {
                let v = out.data.data()[ch * cells + cell];
                if out.mask[cell] {
                    assert_eq!(v, 1.0);
                    covered += 1;
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        // x in [-8, 8] m (33 cells), y in [-6, 6] m (25 cells)
        assert_eq!(covered, 2 * 33 * 25);
    }

    #[test]
    fn impulse_lands_on_back_projected_cell() {
        let cam = downward();
        let grid = GroundGrid::new(-10.0, -10.0, 0.25, 81, 81).unwrap();
        let q = (11usize, 4usize); // (col, row)
        let mut data = Tensor::<f64>::zeros(&[1, 13, 17]);
        data.data_mut()[q.1 * 17 + q.0] = 1.0;
        let out = warp_to_ground(&ViewFeatureMap { data, view_id: 3 }, cam.homography(), &grid).unwrap();
        let (argmax, _) = out
            .data
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let ground = cam.homography().image_to_ground(q.0 as f64, q.1 as f64).unwrap();
        let (r, c) = grid.world_to_grid(ground[0], ground[1]).unwrap();
        assert_eq!(argmax, r * grid.cols + c);
        for (cell, &v) in out.data.data().iter().enumerate() {
            if v != 0.0 {
                let [x, y] = grid.grid_to_world(cell / grid.cols, cell % grid.cols);
                let px = cam.homography().ground_to_image(x, y).unwrap();
                assert!((px[0] - q.0 as f64).abs() < 1.0 && (px[1] - q.1 as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn camera_facing_away_covers_nothing() {
        let k = CameraIntrinsics::new(10.0, 10.0, 8.0, 6.0).unwrap();
        // looking up into the sky from 10 m
        let e = CameraExtrinsics::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -10.0)).unwrap();
        let cam = Camera::new(k, e, 17, 13).unwrap();
        let grid = GroundGrid::new(-5.0, -5.0, 0.5, 21, 21).unwrap();
        let fm = ViewFeatureMap {
            data: Tensor::<f64>::full(&[1, 13, 17], 1.0),
            view_id: 0,
        };
        let out = warp_to_ground(&fm, cam.homography(), &grid).unwrap();
        assert!(out.mask.iter().all(|m| !m));
        assert!(out.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_feature_dims() {
        let cam = downward();
        let grid = GroundGrid::new(-5.0, -5.0, 0.5, 21, 21).unwrap();
        let table = WarpTable::<f64>::new(cam.homography(), &grid, 13, 17).unwrap();
        let fm = ViewFeatureMap {
            data: Tensor::<f64>::zeros(&[1, 12, 17]),
            view_id: 0,
        };
        assert!(matches!(table.apply(&fm), Err(Error::Shape(_))));
        assert!(table.backward(&Tensor::zeros(&[1, 20, 21])).is_err());
    }
}
