//! Pinhole cameras, ground-plane homographies and grid coordinates.
//!
//! Conventions: the world frame is right-handed with Z up and the ground
//! plane at Z = 0. Camera frames have x right, y down and z forward.
//! Pixel coordinates put the center of pixel `(row i, col j)` at
//! `(x, y) = (j, i)`. Ground-grid rows follow world Y and columns follow
//! world X; `origin_x, origin_y` is the center of cell `(0, 0)`.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality tolerance applied to rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;
/// Homogeneous scale at or below which a point counts as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-12;
/// `|det H|` below which a ground homography is rejected.
pub const DEGENERATE_DET_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.skew];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!("non-finite value in {self:?}")));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Intrinsics for a resampled image: x terms scale by `sx`, y terms by `sy`.
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            skew: self.skew * sx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraExtrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraExtrinsics {
    /// Validates that `rotation` is a proper rotation (RᵀR = I, det R = +1).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidExtrinsics {
                camera: None,
                reason: "non-finite entry".into(),
            });
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if residual > ROTATION_TOLERANCE {
            return Err(Error::InvalidExtrinsics {
                camera: None,
                reason: format!("rotation is not orthonormal (max |RᵀR - I| = {residual:e})"),
            });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidExtrinsics {
                camera: None,
                reason: format!("rotation determinant is {det}, expected +1"),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Camera at `center` looking at `target`, with world Z as the up hint.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidExtrinsics {
                camera: None,
                reason: "look-at target coincides with the camera center".into(),
            })?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-9)
            .ok_or_else(|| Error::InvalidExtrinsics {
                camera: None,
                reason: "look-at direction is parallel to the up axis".into(),
            })?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * center);
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// 3×4 perspective projection `P = K [R | t]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionMatrix(pub Matrix3x4<f64>);

pub fn build_projection(k: &CameraIntrinsics, e: &CameraExtrinsics) -> Result<ProjectionMatrix> {
    k.validate()?;
    // Re-run the rotation checks so hand-built extrinsics are held to the same bar.
    let e = CameraExtrinsics::new(e.rotation, e.translation)?;
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&e.rotation);
    rt.set_column(3, &e.translation);
    Ok(ProjectionMatrix(k.matrix() * rt))
}

impl ProjectionMatrix {
    /// Projects a world point to pixel coordinates.
    pub fn project(&self, world: [f64; 3]) -> Result<[f64; 2]> {
        let h = self.0 * Vector4::new(world[0], world[1], world[2], 1.0);
        if h.z <= BEHIND_CAMERA_EPS {
            return Err(Error::BehindCamera { scale: h.z });
        }
        Ok([h.x / h.z, h.y / h.z])
    }

    /// Homogeneous depth `s` of a world point (positive in front).
    pub fn depth(&self, world: [f64; 3]) -> f64 {
        (self.0.row(2) * Vector4::new(world[0], world[1], world[2], 1.0))[0]
    }

    /// Ground homography `[p1 p2 p4]` mapping `(X, Y, 1)` to homogeneous pixels.
    pub fn ground_homography(&self) -> Result<Homography> {
        let m = Matrix3::from_columns(&[self.0.column(0).into_owned(), self.0.column(1).into_owned(), self.0.column(3).into_owned()]);
        Homography::new(m)
    }
}

pub fn project_point(p: &ProjectionMatrix, world: [f64; 3]) -> Result<[f64; 2]> {
    p.project(world)
}

pub fn ground_homography(p: &ProjectionMatrix) -> Result<Homography> {
    p.ground_homography()
}

/// Invertible ground-to-image homography together with its inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    forward: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    pub fn new(forward: Matrix3<f64>) -> Result<Self> {
        let det = forward.determinant();
        if !det.is_finite() || det.abs() < DEGENERATE_DET_EPS {
            return Err(Error::DegenerateCamera { det });
        }
        let inverse = forward.try_inverse().ok_or(Error::DegenerateCamera { det })?;
        Ok(Self { forward, inverse })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.forward
    }

    /// Homogeneous image of a ground point; `[u, v, s]` before division.
    #[inline]
    pub fn apply_homogeneous(&self, x: f64, y: f64) -> [f64; 3] {
        let m = &self.forward;
        [
            m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)],
            m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)],
            m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)],
        ]
    }

    /// Ground point to pixel; fails for points behind the camera.
    pub fn ground_to_image(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let [u, v, s] = self.apply_homogeneous(x, y);
        if s <= BEHIND_CAMERA_EPS {
            return Err(Error::BehindCamera { scale: s });
        }
        Ok([u / s, v / s])
    }

    /// Pixel back onto the ground plane through `H⁻¹`.
    pub fn image_to_ground(&self, px: f64, py: f64) -> Result<[f64; 2]> {
        let h = self.inverse * Vector3::new(px, py, 1.0);
        if h.z.abs() <= BEHIND_CAMERA_EPS {
            return Err(Error::BehindCamera { scale: h.z });
        }
        Ok([h.x / h.z, h.y / h.z])
    }
}

pub fn image_to_ground(h: &Homography, pixel: [f64; 2]) -> Result<[f64; 2]> {
    h.image_to_ground(pixel[0], pixel[1])
}

/// Discretized ground plane. Row index follows world Y, column follows X.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundGrid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GroundGrid {
    pub const DEFAULT_CELL_SIZE: f64 = 0.025;

    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, rows: usize, cols: usize) -> Result<Self> {
        let g = Self {
            origin_x,
            origin_y,
            cell_size,
            rows,
            cols,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid tiling `[0, width] × [0, depth]` meters with cells of `cell_size`.
    pub fn covering(width: f64, depth: f64, cell_size: f64) -> Result<Self> {
        if !(width > 0.0 && depth > 0.0) {
            return Err(Error::Config(format!("ground extent must be positive, got {width} x {depth}")));
        }
        let cols = (width / cell_size).round() as usize;
        let rows = (depth / cell_size).round() as usize;
        Self::new(cell_size / 2.0, cell_size / 2.0, cell_size, rows, cols)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {}", self.cell_size)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!("grid must be at least 1x1, got {}x{}", self.rows, self.cols)));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nearest cell index `(row, col)` for a world point.
    pub fn world_to_grid(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        let col = ((x - self.origin_x) / self.cell_size).round();
        let row = ((y - self.origin_y) / self.cell_size).round();
        if !(row >= 0.0 && col >= 0.0 && row < self.rows as f64 && col < self.cols as f64) {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok((row as usize, col as usize))
    }

    /// World coordinates of a cell center.
    pub fn grid_to_world(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin_x + col as f64 * self.cell_size,
            self.origin_y + row as f64 * self.cell_size,
        ]
    }

    /// Whether `(x, y)` falls within the half-cell border around the cell centers.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.world_to_grid(x, y).is_ok()
    }

    /// World-space bounds `[x_min, x_max, y_min, y_max]` of the covered area.
    pub fn extent(&self) -> [f64; 4] {
        let h = self.cell_size / 2.0;
        [
            self.origin_x - h,
            self.origin_x + (self.cols as f64 - 0.5) * self.cell_size,
            self.origin_y - h,
            self.origin_y + (self.rows as f64 - 0.5) * self.cell_size,
        ]
    }
}

/// A calibrated camera with its derived projection and ground homography.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub image_width: usize,
    pub image_height: usize,
    projection: ProjectionMatrix,
    homography: Homography,
}

impl Camera {
    pub fn new(
        intrinsics: CameraIntrinsics,
        extrinsics: CameraExtrinsics,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be non-zero".into()));
        }
        let projection = build_projection(&intrinsics, &extrinsics)?;
        let homography = projection.ground_homography()?;
        Ok(Self {
            intrinsics,
            extrinsics,
            image_width,
            image_height,
            projection,
            homography,
        })
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn homography(&self) -> &Homography {
        &self.homography
    }

    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.center()
    }

    /// The same camera seen through an image resampled to `width × height`.
    pub fn rescaled(&self, width: usize, height: usize) -> Result<Self> {
        let sx = width as f64 / self.image_width as f64;
        let sy = height as f64 / self.image_height as f64;
        Camera::new(self.intrinsics.scaled(sx, sy), self.extrinsics, width, height)
    }

    /// Whether a pixel position lies inside `[0, W-1] × [0, H-1]`.
    pub fn in_image(&self, px: [f64; 2]) -> bool {
        px[0] >= 0.0 && px[1] >= 0.0 && px[0] <= (self.image_width - 1) as f64 && px[1] <= (self.image_height - 1) as f64
    }

    /// Whether a ground point is in front of the camera and inside its image.
    pub fn sees_ground_point(&self, x: f64, y: f64) -> bool {
        self.homography
            .ground_to_image(x, y)
            .map(|px| self.in_image(px))
            .unwrap_or(false)
    }
}
