//! Occupancy maps and the KL-divergence / Pearson-correlation objective.
//!
//! The objective minimized during training is `KL(g‖p) − CC(p, g)`. The KL
//! term treats both maps as distributions: each is divided by its sum and
//! the divergence is `Σ G log((G + ε) / (P + ε))` with `ε = 1e-8`. The
//! correlation term uses the raw maps. All reductions run in `f64`
//! regardless of the tensor scalar type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GroundGrid;
use crate::scalar::Scalar;

pub const KL_EPS: f64 = 1e-8;
/// Standard deviation below which a map counts as constant.
pub const STD_EPS: f64 = 1e-12;

/// Per-cell values over a ground grid, row-major (`rows × cols`).
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap<T> {
    pub grid: GroundGrid,
    pub values: Vec<T>,
}

impl<T: Scalar> OccupancyMap<T> {
    pub fn new(grid: GroundGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "occupancy map has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("occupancy map contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GroundGrid) -> Self {
        Self {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.grid.cols + col]
    }

    /// Gaussian target: one isotropic kernel of standard deviation
    /// `sigma` meters per point, peak 1 at the exact position, summed and
    /// clamped to `[0, 1]`.
    pub fn gaussian_target(grid: GroundGrid, points: &[[f64; 2]], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("target sigma must be positive, got {sigma}")));
        }
        let mut acc = vec![0.0f64; grid.len()];
        let reach = (4.0 * sigma / grid.cell_size).ceil() as isize;
        let inv = 1.0 / (2.0 * sigma * sigma);
        for &[px, py] in points {
            let c0 = ((px - grid.origin_x) / grid.cell_size).round() as isize;
            let r0 = ((py - grid.origin_y) / grid.cell_size).round() as isize;
            for r in (r0 - reach).max(0)..=(r0 + reach).min(grid.rows as isize - 1) {
                for c in (c0 - reach).max(0)..=(c0 + reach).min(grid.cols as isize - 1) {
                    let [x, y] = grid.grid_to_world(r as usize, c as usize);
                    let d2 = (x - px).powi(2) + (y - py).powi(2);
                    acc[r as usize * grid.cols + c as usize] += (-d2 * inv).exp();
                }
            }
        }
        Ok(Self {
            grid,
            values: acc.into_iter().map(|v| T::from_f64_lossy(v.min(1.0))).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `KL − CC`
    #[default]
    KlCc,
    Kl,
    /// `−CC`
    Cc,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "klcc" => Ok(LossKind::KlCc),
            "kl" => Ok(LossKind::Kl),
            "cc" => Ok(LossKind::Cc),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss '{other}' (expected klcc, kl, cc or mse)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::KlCc => "klcc",
            LossKind::Kl => "kl",
            LossKind::Cc => "cc",
            LossKind::Mse => "mse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub cov: f64,
    pub std_p: f64,
    pub std_g: f64,
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergence {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub kl: f64,
    pub cc: f64,
    pub mse: f64,
    pub objective: f64,
    pub cov: f64,
    pub std_p: f64,
    pub std_g: f64,
    pub kl_degenerate: bool,
    pub cc_degenerate: bool,
}

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("maps have {} and {} cells", a.len(), b.len())));
    }
    Ok(())
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

struct CcParts {
    corr: Correlation,
    centered_p: Vec<f64>,
    centered_g: Vec<f64>,
    ss_p: f64,
    ss_g: f64,
}

fn cc_parts(p: &[f64], g: &[f64]) -> CcParts {
    let m = p.len() as f64;
    let mean_p = p.iter().sum::<f64>() / m;
    let mean_g = g.iter().sum::<f64>() / m;
    let centered_p: Vec<f64> = p.iter().map(|v| v - mean_p).collect();
    let centered_g: Vec<f64> = g.iter().map(|v| v - mean_g).collect();
    let sxy: f64 = centered_p.iter().zip(&centered_g).map(|(a, b)| a * b).sum();
    let ss_p: f64 = centered_p.iter().map(|a| a * a).sum();
    let ss_g: f64 = centered_g.iter().map(|b| b * b).sum();
    let std_p = (ss_p / m).sqrt();
    let std_g = (ss_g / m).sqrt();
    let degenerate = std_p <= STD_EPS || std_g <= STD_EPS;
    let value = if degenerate { 0.0 } else { sxy / (ss_p.sqrt() * ss_g.sqrt()) };
    CcParts {
        corr: Correlation {
            value,
            cov: sxy / m,
            std_p,
            std_g,
            degenerate,
        },
        centered_p,
        centered_g,
        ss_p,
        ss_g,
    }
}

/// Pearson correlation over flattened cells. Constant maps yield 0 with
/// the degenerate flag set.
pub fn pearson_cc<T: Scalar>(p: &[T], g: &[T]) -> Result<Correlation> {
    check_lengths(p, g)?;
    Ok(cc_parts(&to_f64(p), &to_f64(g)).corr)
}

fn normalized(v: &[f64]) -> (Vec<f64>, f64) {
    let s: f64 = v.iter().sum();
    let s = s.max(f64::MIN_POSITIVE);
    (v.iter().map(|x| x / s).collect(), s)
}

/// `KL(g‖p)` over unit-sum normalized maps. An all-zero target yields 0
/// with the degenerate flag set.
pub fn kl_div<T: Scalar>(g: &[T], p: &[T]) -> Result<Divergence> {
    check_lengths(g, p)?;
    let g = to_f64(g);
    if g.iter().sum::<f64>() <= 0.0 {
        return Ok(Divergence {
            value: 0.0,
            degenerate: true,
        });
    }
    let (gn, _) = normalized(&g);
    let (pn, _) = normalized(&to_f64(p));
    let value = gn
        .iter()
        .zip(&pn)
        .filter(|(&gi, _)| gi > 0.0)
        .map(|(&gi, &pi)| gi * ((gi + KL_EPS) / (pi + KL_EPS)).ln())
        .sum();
    Ok(Divergence {
        value,
        degenerate: false,
    })
}

/// Loss value and its gradient with respect to `p`.
pub fn objective<T: Scalar>(p: &[T], g: &[T], kind: LossKind) -> Result<(LossReport, Vec<T>)> {
    check_lengths(p, g)?;
    let pf = to_f64(p);
    let gf = to_f64(g);
    let m = pf.len() as f64;

    let kl = kl_div(g, p)?;
    let mut grad_kl = vec![0.0; pf.len()];
    if !kl.degenerate {
        let (gn, _) = normalized(&gf);
        let (pn, s) = normalized(&pf);
        let d_norm: Vec<f64> = gn.iter().zip(&pn).map(|(&gi, &pi)| -gi / (pi + KL_EPS)).collect();
        let proj: f64 = pn.iter().zip(&d_norm).map(|(a, b)| a * b).sum();
        for (gk, &d) in grad_kl.iter_mut().zip(&d_norm) {
            *gk = (d - proj) / s;
        }
    }

    let cc = cc_parts(&pf, &gf);
    let mut grad_cc = vec![0.0; pf.len()];
    if !cc.corr.degenerate {
        let norm = cc.ss_p.sqrt() * cc.ss_g.sqrt();
        for ((gk, &a), &b) in grad_cc.iter_mut().zip(&cc.centered_p).zip(&cc.centered_g) {
            *gk = b / norm - cc.corr.value * a / cc.ss_p;
        }
    }

    let mse = pf.iter().zip(&gf).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m;

    let (value, grad): (f64, Vec<f64>) = match kind {
        LossKind::KlCc => (
            kl.value - cc.corr.value,
            grad_kl.iter().zip(&grad_cc).map(|(a, b)| a - b).collect(),
        ),
        LossKind::Kl => (kl.value, grad_kl),
        LossKind::Cc => (-cc.corr.value, grad_cc.iter().map(|v| -v).collect()),
        LossKind::Mse => (mse, pf.iter().zip(&gf).map(|(a, b)| 2.0 * (a - b) / m).collect()),
    };

    Ok((
        LossReport {
            kl: kl.value,
            cc: cc.corr.value,
            mse,
            objective: value,
            cov: cc.corr.cov,
            std_p: cc.corr.std_p,
            std_g: cc.corr.std_g,
            kl_degenerate: kl.degenerate,
            cc_degenerate: cc.corr.degenerate,
        },
        grad.into_iter().map(T::from_f64_lossy).collect(),
    ))
}
