//! Shared helpers for the integration tests: finite-difference gradient
//! checks of every differentiable op, random cameras and a two-view micro
//! scene.
#![allow(dead_code)]

pub mod oracle;

use groundview::aggregate::{self, PoolMode};
use groundview::autonet::ops::{self, ConvLayer};
use groundview::geometry::{Camera, CameraExtrinsics, CameraIntrinsics, GroundGrid};
use groundview::loss::{self, LossKind};
use groundview::warp::{ProjectedFeatureMap, ViewFeatureMap, WarpTable};
use groundview::autonet::model::{Model, ModelConfig};
use groundview::loss::OccupancyMap;
use groundview::pipeline::Detector;
use groundview::Tensor;
use nalgebra::Vector3;
use rand::Rng;

/// Central-difference step used by every check.
pub const FD_STEP: f64 = 1e-5;

/// Gradient of `f` at `x` by central differences.
pub fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + FD_STEP;
            let hi = f(&xp);
            xp[i] = orig - FD_STEP;
            let lo = f(&xp);
            xp[i] = orig;
            (hi - lo) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest elementwise deviation relative to the largest gradient entry,
/// with a floor so two all-zero gradients compare equal.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero so a ±step never crosses the ReLU kink.
fn away_from_zero(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// conv2d: gradients w.r.t. input, weight and bias. Returns the worst
/// relative error of the three.
pub fn conv_instance(rng: &mut impl Rng) -> f64 {
    let (cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let (h, w) = (rng.gen_range(3..8), rng.gen_range(3..8));
    let dil = [1, 2, 4][rng.gen_range(0..3)];
    let x = Tensor::from_vec(&[cin, h, w], uniform(rng, cin * h * w, -1.0, 1.0)).unwrap();
    let mut layer = ConvLayer::<f64>::zeros(cin, cout, dil);
    layer.weight = Tensor::from_vec(layer.weight.shape(), uniform(rng, cout * cin * 9, -1.0, 1.0)).unwrap();
    layer.bias = Tensor::from_vec(&[cout], uniform(rng, cout, -1.0, 1.0)).unwrap();
    let r = uniform(rng, cout * h * w, -1.0, 1.0);
    let grads = ops::conv2d_backward(&x, &layer, &Tensor::from_vec(&[cout, h, w], r.clone()).unwrap()).unwrap();

    let fx = |v: &[f64]| {
        let x = Tensor::from_vec(&[cin, h, w], v.to_vec()).unwrap();
        dot(ops::conv2d(&x, &layer).unwrap().data(), &r)
    };
    let fw = |v: &[f64]| {
        let mut l = layer.clone();
        l.weight = Tensor::from_vec(layer.weight.shape(), v.to_vec()).unwrap();
        dot(ops::conv2d(&x, &l).unwrap().data(), &r)
    };
    let fb = |v: &[f64]| {
        let mut l = layer.clone();
        l.bias = Tensor::from_vec(&[cout], v.to_vec()).unwrap();
        dot(ops::conv2d(&x, &l).unwrap().data(), &r)
    };
    rel_err(grads.input.data(), &fd_grad(&fx, x.data()))
        .max(rel_err(grads.weight.data(), &fd_grad(&fw, layer.weight.data())))
        .max(rel_err(grads.bias.data(), &fd_grad(&fb, layer.bias.data())))
}

pub fn relu_instance(rng: &mut impl Rng) -> f64 {
    let shape = [rng.gen_range(1..4), rng.gen_range(2..6), rng.gen_range(2..6)];
    let n: usize = shape.iter().product();
    let x = Tensor::from_vec(&shape, away_from_zero(rng, n)).unwrap();
    let r = uniform(rng, n, -1.0, 1.0);
    let y = ops::relu(&x);
    let g = ops::relu_backward(&y, &Tensor::from_vec(&shape, r.clone()).unwrap());
    let f = |v: &[f64]| dot(ops::relu(&Tensor::from_vec(&shape, v.to_vec()).unwrap()).data(), &r);
    rel_err(g.data(), &fd_grad(&f, x.data()))
}

pub fn logistic_instance(rng: &mut impl Rng) -> f64 {
    let shape = [rng.gen_range(1..4), rng.gen_range(2..6), rng.gen_range(2..6)];
    let n: usize = shape.iter().product();
    let x = Tensor::from_vec(&shape, uniform(rng, n, -6.0, 6.0)).unwrap();
    let r = uniform(rng, n, -1.0, 1.0);
    let y = ops::logistic(&x);
    let g = ops::logistic_backward(&y, &Tensor::from_vec(&shape, r.clone()).unwrap());
    let f = |v: &[f64]| dot(ops::logistic(&Tensor::from_vec(&shape, v.to_vec()).unwrap()).data(), &r);
    rel_err(g.data(), &fd_grad(&f, x.data()))
}

pub fn resize_instance(rng: &mut impl Rng) -> f64 {
    let c = rng.gen_range(1..3);
    let (h, w) = (rng.gen_range(2..9), rng.gen_range(2..9));
    let (oh, ow) = (rng.gen_range(1..12), rng.gen_range(1..12));
    let x = Tensor::from_vec(&[c, h, w], uniform(rng, c * h * w, -1.0, 1.0)).unwrap();
    let r = uniform(rng, c * oh * ow, -1.0, 1.0);
    let g = ops::bilinear_resize_backward(x.shape(), &Tensor::from_vec(&[c, oh, ow], r.clone()).unwrap()).unwrap();
    let f = |v: &[f64]| {
        let x = Tensor::from_vec(&[c, h, w], v.to_vec()).unwrap();
        dot(ops::bilinear_resize(&x, oh, ow).unwrap().data(), &r)
    };
    rel_err(g.data(), &fd_grad(&f, x.data()))
}

/// A camera about `dist` meters from the grid center, `height` up, aimed
/// at a point near the center.
pub fn ring_camera(rng: &mut impl Rng, center: [f64; 2], w: usize, h: usize) -> Camera {
    let az = rng.gen_range(0.0..std::f64::consts::TAU);
    let dist = rng.gen_range(3.0..8.0);
    let height = rng.gen_range(2.0..8.0);
    let eye = Vector3::new(center[0] + dist * az.cos(), center[1] + dist * az.sin(), height);
    let target = Vector3::new(center[0] + rng.gen_range(-1.0..1.0), center[1] + rng.gen_range(-1.0..1.0), 0.0);
    let f = w as f64 / (2.0 * (rng.gen_range(35.0f64..50.0)).to_radians().tan());
    let k = CameraIntrinsics::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0).unwrap();
    let e = CameraExtrinsics::look_at(eye, target).unwrap();
    Camera::new(k, e, w, h).unwrap()
}

/// Warp: the gather is linear in the features, so its transpose must match
/// finite differences of a random projection of the output.
pub fn warp_instance(rng: &mut impl Rng) -> f64 {
    let grid = GroundGrid::covering(4.0, 4.0, 0.25).unwrap();
    let (fh, fw) = (rng.gen_range(4..10), rng.gen_range(5..12));
    let cam = ring_camera(rng, [2.0, 2.0], fw, fh);
    let table = WarpTable::<f64>::new(cam.homography(), &grid, fh, fw).unwrap();
    let c = rng.gen_range(1..3);
    let x = uniform(rng, c * fh * fw, -1.0, 1.0);
    let r = uniform(rng, c * grid.len(), -1.0, 1.0);
    let g = table
        .backward(&Tensor::from_vec(&[c, grid.rows, grid.cols], r.clone()).unwrap())
        .unwrap();
    let f = |v: &[f64]| {
        let fm = ViewFeatureMap {
            data: Tensor::from_vec(&[c, fh, fw], v.to_vec()).unwrap(),
            view_id: 0,
        };
        dot(table.apply(&fm).unwrap().data.data(), &r)
    };
    rel_err(g.data(), &fd_grad(&f, &x))
}

/// Pooling in either mode, gradient w.r.t. every view's projected features.
pub fn pool_instance(rng: &mut impl Rng, mode: PoolMode) -> f64 {
    let n = rng.gen_range(1..5);
    let shape = [rng.gen_range(1..3), rng.gen_range(2..5), rng.gen_range(2..5)];
    let cells = shape[1] * shape[2];
    let len: usize = shape.iter().product();
    let views: Vec<ProjectedFeatureMap<f64>> = (0..n)
        .map(|k| {
            let mask: Vec<bool> = (0..cells).map(|_| rng.gen_bool(0.7)).collect();
            let data: Vec<f64> = (0..len)
                .map(|i| if mask[i % cells] { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect();
            ProjectedFeatureMap {
                data: Tensor::from_vec(&shape, data).unwrap(),
                mask,
                view_id: 10 - k,
            }
        })
        .collect();
    let r = uniform(rng, len, -1.0, 1.0);
    let refs: Vec<_> = views.iter().collect();
    let pooled = aggregate::pool(&refs, mode).unwrap();
    let g = aggregate::pool_backward(&pooled, &Tensor::from_vec(&shape, r.clone()).unwrap()).unwrap();
    let mut worst = 0.0f64;
    for k in 0..n {
        let f = |v: &[f64]| {
            let mut vs = views.clone();
            vs[k].data = Tensor::from_vec(&shape, v.to_vec()).unwrap();
            let refs: Vec<_> = vs.iter().collect();
            dot(aggregate::pool(&refs, mode).unwrap().data.data(), &r)
        };
        worst = worst.max(rel_err(g.data(), &fd_grad(&f, views[k].data.data())));
    }
    worst
}

/// Objective of the given kind against a random target.
pub fn loss_instance(rng: &mut impl Rng, kind: LossKind) -> f64 {
    let n = rng.gen_range(16..100);
    let p = uniform(rng, n, 0.02, 0.98);
    let g = uniform(rng, n, 0.0, 1.0);
    let (_, grad) = loss::objective(&p, &g, kind).unwrap();
    let f = |v: &[f64]| loss::objective(v, &g, kind).unwrap().0.objective;
    rel_err(&grad, &fd_grad(&f, &p))
}

/// Two cameras over a 2 m × 2 m grid with 8 × 8 cells, 12 × 16 images and
/// 6 × 8 features: small enough to finite-difference every parameter.
pub struct MicroScene {
    pub model: Model<f64>,
    pub grid: GroundGrid,
    pub cameras: Vec<(usize, Camera)>,
    pub images: Vec<(usize, Tensor<f64>)>,
    pub target: OccupancyMap<f64>,
}

impl MicroScene {
    pub fn new(rng: &mut impl Rng) -> Self {
        let grid = GroundGrid::covering(2.0, 2.0, 0.25).unwrap();
        let (h, w) = (12, 16);
        let cameras: Vec<(usize, Camera)> = [3usize, 7]
            .iter()
            .map(|&id| (id, ring_camera(rng, [1.0, 1.0], w, h)))
            .collect();
        let mut cfg = ModelConfig::new(h, w, grid.rows, grid.cols);
        cfg.extractor_channels = vec![3];
        cfg.feature_channels = 2;
        cfg.feature_height = 6;
        cfg.feature_width = 8;
        cfg.head_channels = [3, 2];
        let mut model = Model::new(cfg, rng).unwrap();
        // Zero biases put every dead cell exactly on a ReLU kink, where the
        // central difference averages two one-sided slopes. Positive ones
        // also keep the tiny network from dying entirely.
        for layer in model.extractor.iter_mut().chain(model.head.iter_mut()) {
            let n = layer.bias.len();
            layer.bias = Tensor::from_vec(&[n], uniform(rng, n, 0.05, 0.3)).unwrap();
        }
        let images = cameras
            .iter()
            .map(|(id, _)| (*id, Tensor::from_vec(&[3, h, w], uniform(rng, 3 * h * w, 0.0, 1.0)).unwrap()))
            .collect();
        let pts = [[rng.gen_range(0.3..1.7), rng.gen_range(0.3..1.7)]];
        let target = OccupancyMap::gaussian_target(grid, &pts, 0.3).unwrap();
        Self {
            model,
            grid,
            cameras,
            images,
            target,
        }
    }

    pub fn detector(&self, model: Model<f64>) -> Detector<f64> {
        Detector::new(model, self.grid, &self.cameras).unwrap()
    }

    pub fn views(&self) -> Vec<(usize, &Tensor<f64>)> {
        self.images.iter().map(|(id, t)| (*id, t)).collect()
    }

    /// Worst relative error over the parameter tensors selected by `which`
    /// (indices into `Model::parameters`).
    pub fn check(&self, kind: LossKind, which: &[usize]) -> f64 {
        let det = self.detector(self.model.clone());
        let analytic = det.loss_and_grad(&self.views(), &self.target, kind).unwrap().grads;
        let mut worst = 0.0f64;
        for &k in which {
            let f = |v: &[f64]| {
                let mut model = self.model.clone();
                *model.parameters_mut()[k] = Tensor::from_vec(analytic[k].shape(), v.to_vec()).unwrap();
                self.detector(model)
                    .loss_and_grad(&self.views(), &self.target, kind)
                    .unwrap()
                    .report
                    .objective
            };
            worst = worst.max(rel_err(analytic[k].data(), &fd_grad(&f, self.model.parameters()[k].data())));
        }
        worst
    }
}

/// A valid camera with random focal length, principal point, height, aim
/// and roll about the optical axis.
pub fn random_camera(rng: &mut impl Rng, w: usize, h: usize) -> Camera {
    loop {
        let eye = Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(1.0..15.0));
        let az = rng.gen_range(0.0..std::f64::consts::TAU);
        let reach = rng.gen_range(3.0..30.0);
        let target = Vector3::new(eye.x + reach * az.cos(), eye.y + reach * az.sin(), 0.0);
        let Ok(base) = CameraExtrinsics::look_at(eye, target) else { continue };
        let roll = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), rng.gen_range(-0.5..0.5));
        let r = roll.matrix() * base.rotation();
        let Ok(e) = CameraExtrinsics::new(r, -(r * eye)) else { continue };
        let fx = rng.gen_range(200.0..2000.0);
        let k = CameraIntrinsics::new(
            fx,
            fx * rng.gen_range(0.9..1.1),
            w as f64 * rng.gen_range(0.4..0.6),
            h as f64 * rng.gen_range(0.4..0.6),
        )
        .unwrap();
        if let Ok(cam) = Camera::new(k, e, w, h) {
            return cam;
        }
    }
}

/// Round trips on `n_cameras` random cameras with `per_camera` ground
/// points each, drawn by unprojecting random pixels and kept when they lie
/// within 60 m of the camera. Returns the worst ground error (m) of
/// project→unproject and the worst pixel gap between the projection
/// matrix and the ground homography.
pub fn geometry_round_trip(rng: &mut impl Rng, n_cameras: usize, per_camera: usize) -> (f64, f64, usize) {
    let (mut worst_m, mut worst_px, mut n) = (0.0f64, 0.0f64, 0);
    for _ in 0..n_cameras {
        let cam = random_camera(rng, 640, 480);
        let c = cam.center();
        let mut kept = 0;
        while kept < per_camera {
            let px = [rng.gen_range(0.0..639.0), rng.gen_range(0.0..479.0)];
            let Ok([x, y]) = cam.homography().image_to_ground(px[0], px[1]) else { continue };
            if (x - c.x).hypot(y - c.y) > 60.0 || !cam.sees_ground_point(x, y) {
                continue;
            }
            kept += 1;
            let projected = cam.projection().project([x, y, 0.0]).unwrap();
            let via_h = cam.homography().ground_to_image(x, y).unwrap();
            worst_px = worst_px.max((projected[0] - via_h[0]).hypot(projected[1] - via_h[1]));
            let [bx, by] = cam.homography().image_to_ground(projected[0], projected[1]).unwrap();
            worst_m = worst_m.max((bx - x).hypot(by - y));
            n += 1;
        }
    }
    (worst_m, worst_px, n)
}
