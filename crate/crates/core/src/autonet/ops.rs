//! Differentiable primitives. Each forward function has a matching
//! `*_backward` that returns the vector-Jacobian product for an upstream
//! gradient of the output's shape.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 3×3 convolution with zero "same" padding and a dilation factor.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    /// `out × in × 3 × 3`
    pub weight: Tensor<T>,
    /// `out`
    pub bias: Tensor<T>,
    pub dilation: usize,
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, dilation: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_channels, in_channels, 3, 3]),
            bias: Tensor::zeros(&[out_channels]),
            dilation,
        }
    }

    /// Kaiming (fan-in) normal weights, zero bias.
    pub fn kaiming<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, dilation: usize, rng: &mut R) -> Self {
        let std = (2.0 / (in_channels * 9) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weight = Tensor::from_fn(&[out_channels, in_channels, 3, 3], |_| T::from_f64_lossy(normal.sample(rng)));
        Self {
            weight,
            bias: Tensor::zeros(&[out_channels]),
            dilation,
        }
    }

    /// Identity kernel (center tap 1) for `channels → channels`.
    pub fn identity(channels: usize, dilation: usize) -> Self {
        let mut layer = Self::zeros(channels, channels, dilation);
        for c in 0..channels {
            layer.weight.data_mut()[((c * channels + c) * 3 + 1) * 3 + 1] = T::one();
        }
        layer
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Valid output range along one axis for a tap offset `off`.
#[inline]
fn tap_range(len: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let (ci, h, w) = x.chw()?;
    if ci != layer.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {ci}",
            layer.in_channels()
        )));
    }
    let co = layer.out_channels();
    let plane = h * w;
    let d = layer.dilation as isize;
    let xd = x.data();
    let wd = layer.weight.data();
    let mut out = vec![T::zero(); co * plane];
    for (o, out_plane) in out.chunks_exact_mut(plane.max(1)).enumerate().take(co) {
        out_plane.fill(layer.bias.data()[o]);
        for i in 0..ci {
            let in_plane = &xd[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let dy = (ky as isize - 1) * d;
                let (y0, y1) = tap_range(h, dy);
                for kx in 0..3 {
                    let dx = (kx as isize - 1) * d;
                    let (x0, x1) = tap_range(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    let wv = wd[((o * ci + i) * 3 + ky) * 3 + kx];
                    for y in y0..y1 {
                        let src = (y as isize + dy) as usize * w + (x0 as isize + dx) as usize;
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (a, &b) in dst.iter_mut().zip(&in_plane[src..src + (x1 - x0)]) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[co, h, w], out)
}

pub fn conv2d_backward<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
    let (ci, h, w) = x.chw()?;
    let co = layer.out_channels();
    if grad_out.shape() != [co, h, w] {
        return Err(Error::Shape(format!(
            "conv output gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [co, h, w]
        )));
    }
    let plane = h * w;
    let d = layer.dilation as isize;
    let xd = x.data();
    let wd = layer.weight.data();
    let gd = grad_out.data();
    let mut dx = vec![T::zero(); ci * plane];
    let mut dw = vec![T::zero(); co * ci * 9];
    let mut db = vec![T::zero(); co];
    for o in 0..co {
        let g_plane = &gd[o * plane..(o + 1) * plane];
        db[o] = g_plane.iter().copied().sum();
        for i in 0..ci {
            let in_plane = &xd[i * plane..(i + 1) * plane];
            let dx_plane = &mut dx[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let dy = (ky as isize - 1) * d;
                let (y0, y1) = tap_range(h, dy);
                for kx in 0..3 {
                    let ddx = (kx as isize - 1) * d;
                    let (x0, x1) = tap_range(w, ddx);
                    if x0 >= x1 {
                        continue;
                    }
                    let widx = ((o * ci + i) * 3 + ky) * 3 + kx;
                    let wv = wd[widx];
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let src = (y as isize + dy) as usize * w + (x0 as isize + ddx) as usize;
                        let g_row = &g_plane[y * w + x0..y * w + x1];
                        let in_row = &in_plane[src..src + (x1 - x0)];
                        acc += g_row.iter().zip(in_row).fold(T::zero(), |s, (&g, &v)| s + g * v);
                        for (a, &g) in dx_plane[src..src + (x1 - x0)].iter_mut().zip(g_row) {
                            *a += wv * g;
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(&[ci, h, w], dx)?,
        weight: Tensor::from_vec(&[co, ci, 3, 3], dw)?,
        bias: Tensor::from_vec(&[co], db)?,
    })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given its *output*.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

#[inline]
pub fn logistic_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn logistic<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(logistic_scalar)
}

/// Gradient of the logistic given its *output*.
pub fn logistic_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

/// Source coordinate and blend factor of output index `i` when resizing
/// an axis of length `src` to `dst`. Sample positions are `i * src / dst`,
/// the same scaling applied to intrinsics for a resampled image.
#[inline]
fn resize_tap(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = (i as f64 * src as f64 / dst as f64).min((src - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, s - i0 as f64)
}

pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    if height == 0 || width == 0 || h == 0 || w == 0 {
        return Err(Error::Shape("cannot resize to or from an empty plane".into()));
    }
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let ys: Vec<_> = (0..height).map(|i| resize_tap(i, h, height)).collect();
    let xs: Vec<_> = (0..width).map(|j| resize_tap(j, w, width)).collect();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let p = x.channel(ch);
        for &(y0, y1, fy) in &ys {
            let fy = T::from_f64_lossy(fy);
            for &(x0, x1, fx) in &xs {
                let fx = T::from_f64_lossy(fx);
                let top = p[y0 * w + x0] * (T::one() - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (T::one() - fx) + p[y1 * w + x1] * fx;
                out.push(top * (T::one() - fy) + bot * fy);
            }
        }
    }
    Tensor::from_vec(&[c, height, width], out)
}

pub fn bilinear_resize_backward<T: Scalar>(input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, height, width) = grad_out.chw()?;
    let [ci, h, w] = input_shape else {
        return Err(Error::Shape(format!("resize input must be C×H×W, got {input_shape:?}")));
    };
    let (ci, h, w) = (*ci, *h, *w);
    if ci != c {
        return Err(Error::Shape("resize gradient channel mismatch".into()));
    }
    if (h, w) == (height, width) {
        return Ok(grad_out.clone());
    }
    let ys: Vec<_> = (0..height).map(|i| resize_tap(i, h, height)).collect();
    let xs: Vec<_> = (0..width).map(|j| resize_tap(j, w, width)).collect();
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let g = grad_out.channel(ch);
        let d = &mut dx[ch * h * w..(ch + 1) * h * w];
        for (r, &(y0, y1, fy)) in ys.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            for (k, &(x0, x1, fx)) in xs.iter().enumerate() {
                let fx = T::from_f64_lossy(fx);
                let gv = g[r * width + k];
                d[y0 * w + x0] += gv * (T::one() - fy) * (T::one() - fx);
                d[y0 * w + x1] += gv * (T::one() - fy) * fx;
                d[y1 * w + x0] += gv * fy * (T::one() - fx);
                d[y1 * w + x1] += gv * fy * fx;
            }
        }
    }
    Tensor::from_vec(&[c, h, w], dx)
}
