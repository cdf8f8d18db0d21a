//! Forward and backward kernels. Batches are processed one sample per task;
//! parameter gradients are reduced over samples in order.

use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_ch
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1;
        (oh, ow)
    }

    /// Multiply-adds counted as two operations each; bias and activations ignored.
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.out_hw(h, w);
        2 * (self.kernel * self.kernel * self.in_ch * self.out_ch * oh * ow) as u64
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

fn im2col(s: &ConvShape, x: &[f64], h: usize, w: usize, oh: usize, ow: usize, col: &mut [f64]) {
    let k = s.kernel;
    let p = oh * ow;
    for ci in 0..s.in_ch {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        *v = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(s: &ConvShape, col: &[f64], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [f64]) {
    let k = s.kernel;
    let p = oh * ow;
    dx.iter_mut().for_each(|v| *v = 0.0);
    for ci in 0..s.in_ch {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded 2-D convolution. `params` holds the `out x in x k x k` weights
/// followed by `out` biases.
pub fn conv_forward(s: &ConvShape, params: &[f64], x: &Tensor) -> Tensor {
    assert_eq!(x.c, s.in_ch, "conv input channels");
    let (oh, ow) = s.out_hw(x.h, x.w);
    let p = oh * ow;
    let (weights, bias) = params.split_at(s.weight_len());
    let mut out = Tensor::zeros(x.n, s.out_ch, oh, ow);
    let (h, w) = (x.h, x.w);
    exec::for_each_chunk_mut(&mut out.data, s.out_ch * p, |i, y| {
        let mut col = vec![0.0; s.col_rows() * p];
        im2col(s, x.sample(i), h, w, oh, ow, &mut col);
        for (co, b) in bias.iter().enumerate() {
            y[co * p..(co + 1) * p].iter_mut().for_each(|v| *v = *b);
        }
        gemm(
            MatRef::new(weights, s.out_ch, s.col_rows()),
            MatRef::new(&col, s.col_rows(), p),
            y,
            true,
        );
    });
    out
}

/// Returns the input gradient and accumulates parameter gradients into `dparams`.
pub fn conv_backward(
    s: &ConvShape,
    params: &[f64],
    x: &Tensor,
    dy: &Tensor,
    dparams: &mut [f64],
) -> Tensor {
    let (oh, ow) = s.out_hw(x.h, x.w);
    assert_eq!([dy.n, dy.c, dy.h, dy.w], [x.n, s.out_ch, oh, ow], "conv grad shape");
    let p = oh * ow;
    let kdim = s.col_rows();
    let weights = &params[..s.weight_len()];
    let (h, w) = (x.h, x.w);
    let per_sample = exec::map_range(x.n, |i| {
        let mut col = vec![0.0; kdim * p];
        im2col(s, x.sample(i), h, w, oh, ow, &mut col);
        let g = dy.sample(i);
        let mut dw = vec![0.0; s.weight_len()];
        gemm(MatRef::new(g, s.out_ch, p), MatRef::new(&col, kdim, p).t(), &mut dw, false);
        let db: Vec<f64> = (0..s.out_ch).map(|co| g[co * p..(co + 1) * p].iter().sum()).collect();
        gemm(MatRef::new(weights, s.out_ch, kdim).t(), MatRef::new(g, s.out_ch, p), &mut col, false);
        let mut dx = vec![0.0; s.in_ch * h * w];
        col2im(s, &col, h, w, oh, ow, &mut dx);
        (dw, db, dx)
    });
    let (dweights, dbias) = dparams.split_at_mut(s.weight_len());
    let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
    let stride = x.sample_len();
    for (i, (dw, db, dxi)) in per_sample.into_iter().enumerate() {
        dweights.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        dbias.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
        dx.data[i * stride..(i + 1) * stride].copy_from_slice(&dxi);
    }
    dx
}

/// Per-sample, per-channel normalization without affine parameters.
/// Returns the output and the inverse standard deviations.
pub fn instance_norm_forward(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let plane = x.h * x.w;
    let mut out = x.clone();
    let mut inv = vec![0.0; x.n * x.c];
    for (k, chunk) in out.data.chunks_mut(plane.max(1)).enumerate() {
        let mean = chunk.iter().sum::<f64>() / plane as f64;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let is = 1.0 / (var + eps).sqrt();
        chunk.iter_mut().for_each(|v| *v = (*v - mean) * is);
        inv[k] = is;
    }
    (out, inv)
}

/// Gradient of instance norm given its normalized output `xhat`.
pub fn instance_norm_backward(xhat: &Tensor, inv_std: &[f64], dy: &Tensor) -> Tensor {
    let plane = xhat.h * xhat.w;
    let mut dx = dy.clone();
    let n = plane as f64;
    for (k, g) in dx.data.chunks_mut(plane.max(1)).enumerate() {
        let xh = &xhat.data[k * plane..(k + 1) * plane];
        let mean_g = g.iter().sum::<f64>() / n;
        let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        for (gi, &xi) in g.iter_mut().zip(xh) {
            *gi = inv_std[k] * (*gi - mean_g - xi * mean_gx);
        }
    }
    dx
}

pub fn leaky_relu_forward(x: &Tensor, slope: f64) -> Tensor {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= slope
        }
    });
    y
}

pub fn leaky_relu_backward(x: &Tensor, slope: f64, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data.iter_mut().zip(&x.data).for_each(|(g, &v)| {
        if v < 0.0 {
            *g *= slope
        }
    });
    dx
}

pub fn tanh_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.tanh());
    y
}

pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data.iter_mut().zip(&y.data).for_each(|(g, &t)| *g *= 1.0 - t * t);
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_forward(x: &Tensor) -> Tensor {
    let (h2, w2) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(x.n, x.c, h2, w2);
    for (k, dst) in y.data.chunks_mut(h2 * w2).enumerate() {
        let src = &x.data[k * x.h * x.w..(k + 1) * x.h * x.w];
        for yy in 0..h2 {
            for xx in 0..w2 {
                dst[yy * w2 + xx] = src[(yy / 2) * x.w + xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for (k, dst) in dx.data.chunks_mut(h * w).enumerate() {
        let src = &dy.data[k * dy.h * dy.w..(k + 1) * dy.h * dy.w];
        for yy in 0..dy.h {
            for xx in 0..dy.w {
                dst[(yy / 2) * w + xx / 2] += src[yy * dy.w + xx];
            }
        }
    }
    dx
}
