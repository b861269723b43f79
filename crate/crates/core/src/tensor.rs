//! Dense rank-4 `f32` tensors and the handful of layers the network needs:
//! same-size convolution, ReLU and pixel (un)shuffle, each with its exact
//! gradient.
//!
//! Every operation is a pure function. Per-element accumulation order is fixed,
//! so results are bit-identical whatever the rayon thread count.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("tensor dimension `{dim}` must be at least 1")]
    EmptyDim { dim: &'static str },
    #[error("data length {found} does not match shape volume {expected}")]
    DataLength { expected: usize, found: usize },
    #[error("shape mismatch in `{dim}`: expected {expected}, found {found}")]
    ShapeMismatch {
        dim: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dimension `{dim}` = {size} is not divisible by {factor}")]
    NotDivisible {
        dim: &'static str,
        size: usize,
        factor: usize,
    },
    #[error("kernel size {size} must be odd")]
    EvenKernel { size: usize },
    #[error("factor must be at least 1")]
    ZeroFactor,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// `(batch, channels, rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn volume(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    fn validate(&self) -> Result<()> {
        for (dim, v) in [("n", self.n), ("c", self.c), ("h", self.h), ("w", self.w)] {
            if v == 0 {
                return Err(TensorError::EmptyDim { dim });
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(Tensor {
            shape,
            data: vec![0.0; shape.volume()],
        })
    }

    pub fn full(shape: Shape, value: f32) -> Result<Self> {
        shape.validate()?;
        Ok(Tensor {
            shape,
            data: vec![value; shape.volume()],
        })
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.volume() {
            return Err(TensorError::DataLength {
                expected: shape.volume(),
                found: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        shape.validate()?;
        let mut data = Vec::with_capacity(shape.volume());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// Row-major `h·w` plane for `(n, c)`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Copy of batch item `n` as a batch of one.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let s = self.shape;
        let item = s.c * s.plane();
        Tensor {
            shape: Shape::new(1, s.c, s.h, s.w),
            data: self.data[n * item..(n + 1) * item].to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or(TensorError::EmptyDim { dim: "n" })?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.volume() * items.len());
        let mut n = 0;
        for t in items {
            let ts = t.shape;
            check_dim("c", s.c, ts.c)?;
            check_dim("h", s.h, ts.h)?;
            check_dim("w", s.w, ts.w)?;
            data.extend_from_slice(&t.data);
            n += ts.n;
        }
        Tensor::from_vec(Shape::new(n, s.c, s.h, s.w), data)
    }

    pub fn reshape(self, shape: Shape) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        check_same(self.shape, other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: f32) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        check_same(self.shape, other.shape)?;
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        check_same(self.shape, other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}

fn check_dim(dim: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(TensorError::ShapeMismatch { dim, expected, found });
    }
    Ok(())
}

pub(crate) fn check_same(a: Shape, b: Shape) -> Result<()> {
    check_dim("n", a.n, b.n)?;
    check_dim("c", a.c, b.c)?;
    check_dim("h", a.h, b.h)?;
    check_dim("w", a.w, b.w)
}

/// Stride-1 convolution with "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        for (dim, v) in [("in_channels", in_channels), ("out_channels", out_channels)] {
            if v == 0 {
                return Err(TensorError::EmptyDim { dim });
            }
        }
        for k in [kernel_h, kernel_w] {
            if k % 2 == 0 {
                return Err(TensorError::EvenKernel { size: k });
            }
        }
        Ok(ConvSpec {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
        })
    }

    /// Square 3×3 kernel, the only size the network uses.
    pub fn k3(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: 3,
            kernel_w: 3,
        }
    }

    pub fn pad_h(&self) -> usize {
        (self.kernel_h - 1) / 2
    }

    pub fn pad_w(&self) -> usize {
        (self.kernel_w - 1) / 2
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().volume()
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    fn check(&self, input: Shape, weights: Shape, bias_len: usize) -> Result<()> {
        check_dim("input.c", self.in_channels, input.c)?;
        let ws = self.weight_shape();
        check_dim("weights.out", ws.n, weights.n)?;
        check_dim("weights.in", ws.c, weights.c)?;
        check_dim("weights.kh", ws.h, weights.h)?;
        check_dim("weights.kw", ws.w, weights.w)?;
        check_dim("bias", self.out_channels, bias_len)
    }
}

/// Valid output range `[lo, hi)` for a tap offset `d` on an axis of length `len`.
#[inline]
fn tap_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

/// `out += kernel ⋆ inp` for one channel pair, zero padded.
fn correlate_accumulate(out: &mut [f32], inp: &[f32], h: usize, w: usize, kernel: &[f32], spec: &ConvSpec) {
    let (ph, pw) = (spec.pad_h() as isize, spec.pad_w() as isize);
    for ky in 0..spec.kernel_h {
        let dy = ky as isize - ph;
        let (y0, y1) = tap_range(h, dy);
        for kx in 0..spec.kernel_w {
            let dx = kx as isize - pw;
            let (x0, x1) = tap_range(w, dx);
            if x0 >= x1 {
                continue;
            }
            let wv = kernel[ky * spec.kernel_w + kx];
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx = (x0 as isize + dx) as usize;
                let orow = &mut out[y * w + x0..y * w + x1];
                let irow = &inp[sy * w + sx..sy * w + sx + (x1 - x0)];
                for (o, &i) in orow.iter_mut().zip(irow) {
                    *o += wv * i;
                }
            }
        }
    }
}

/// Adjoint of [`correlate_accumulate`] w.r.t. its input.
fn correlate_adjoint_accumulate(gin: &mut [f32], gout: &[f32], h: usize, w: usize, kernel: &[f32], spec: &ConvSpec) {
    let (ph, pw) = (spec.pad_h() as isize, spec.pad_w() as isize);
    for ky in 0..spec.kernel_h {
        let dy = ky as isize - ph;
        let (y0, y1) = tap_range(h, dy);
        for kx in 0..spec.kernel_w {
            let dx = kx as isize - pw;
            let (x0, x1) = tap_range(w, dx);
            if x0 >= x1 {
                continue;
            }
            let wv = kernel[ky * spec.kernel_w + kx];
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx = (x0 as isize + dx) as usize;
                let grow = &gout[y * w + x0..y * w + x1];
                let irow = &mut gin[sy * w + sx..sy * w + sx + (x1 - x0)];
                for (i, &g) in irow.iter_mut().zip(grow) {
                    *i += wv * g;
                }
            }
        }
    }
}

/// Eight-lane dot product; the lane split keeps it vectorisable while the
/// summation order stays fixed.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (ca, cb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            lanes[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    lanes.iter().sum::<f32>() + tail
}

#[inline]
fn sum(a: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for l in 0..8 {
            lanes[l] += a[i * 8 + l];
        }
    }
    let tail: f32 = a[chunks * 8..].iter().sum();
    lanes.iter().sum::<f32>() + tail
}

/// Zero-padded cross-correlation plus bias; output keeps the input's spatial size.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &[f32], spec: &ConvSpec) -> Result<Tensor> {
    let s = input.shape;
    spec.check(s, weights.shape, bias.len())?;
    let out_shape = Shape::new(s.n, spec.out_channels, s.h, s.w);
    let plane = s.plane();
    let kvol = spec.kernel_h * spec.kernel_w;
    let mut out = vec![0.0f32; out_shape.volume()];
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, oplane)| {
        let (n, oc) = (idx / spec.out_channels, idx % spec.out_channels);
        oplane.fill(bias[oc]);
        for ic in 0..spec.in_channels {
            let kernel = &weights.data[(oc * spec.in_channels + ic) * kvol..][..kvol];
            correlate_accumulate(oplane, input.plane(n, ic), s.h, s.w, kernel, spec);
        }
    });
    Ok(Tensor {
        shape: out_shape,
        data: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// Gradients of a scalar loss w.r.t. the conv input, weights and bias given the
/// loss gradient at the conv output.
pub fn conv2d_grads(input: &Tensor, weights: &Tensor, upstream: &Tensor, spec: &ConvSpec) -> Result<ConvGrads> {
    let (gw, gb) = conv2d_param_grads(input, weights, upstream, spec)?;
    let gi = conv2d_input_grad(weights, upstream, spec, input.shape)?;
    Ok(ConvGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}

pub(crate) fn conv2d_input_grad(
    weights: &Tensor,
    upstream: &Tensor,
    spec: &ConvSpec,
    input_shape: Shape,
) -> Result<Tensor> {
    let s = input_shape;
    let us = upstream.shape;
    check_dim("input.c", spec.in_channels, s.c)?;
    check_dim("upstream.n", s.n, us.n)?;
    check_dim("upstream.c", spec.out_channels, us.c)?;
    check_dim("upstream.h", s.h, us.h)?;
    check_dim("upstream.w", s.w, us.w)?;
    check_same(spec.weight_shape(), weights.shape)?;
    let kvol = spec.kernel_h * spec.kernel_w;
    let mut gin = vec![0.0f32; s.volume()];
    gin.par_chunks_mut(s.plane()).enumerate().for_each(|(idx, gplane)| {
        let (n, ic) = (idx / spec.in_channels, idx % spec.in_channels);
        for oc in 0..spec.out_channels {
            let kernel = &weights.data[(oc * spec.in_channels + ic) * kvol..][..kvol];
            correlate_adjoint_accumulate(gplane, upstream.plane(n, oc), s.h, s.w, kernel, spec);
        }
    });
    Tensor::from_vec(s, gin)
}

pub(crate) fn conv2d_param_grads(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
    spec: &ConvSpec,
) -> Result<(Tensor, Vec<f32>)> {
    let s = input.shape;
    spec.check(s, weights.shape, spec.out_channels)?;
    check_same(Shape::new(s.n, spec.out_channels, s.h, s.w), upstream.shape)?;
    let (h, w) = (s.h, s.w);
    let (ph, pw) = (spec.pad_h() as isize, spec.pad_w() as isize);
    let kvol = spec.kernel_h * spec.kernel_w;
    let per_oc = spec.in_channels * kvol;
    let mut gw = vec![0.0f32; spec.weight_count()];
    gw.par_chunks_mut(per_oc).enumerate().for_each(|(oc, gslice)| {
        for n in 0..s.n {
            let g = upstream.plane(n, oc);
            for ic in 0..spec.in_channels {
                let inp = input.plane(n, ic);
                for ky in 0..spec.kernel_h {
                    let dy = ky as isize - ph;
                    let (y0, y1) = tap_range(h, dy);
                    for kx in 0..spec.kernel_w {
                        let dx = kx as isize - pw;
                        let (x0, x1) = tap_range(w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let mut acc = 0.0f32;
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let sx = (x0 as isize + dx) as usize;
                            acc += dot(&g[y * w + x0..y * w + x1], &inp[sy * w + sx..sy * w + sx + (x1 - x0)]);
                        }
                        gslice[ic * kvol + ky * spec.kernel_w + kx] += acc;
                    }
                }
            }
        }
    });
    let gb = (0..spec.out_channels)
        .map(|oc| (0..s.n).map(|n| sum(upstream.plane(n, oc))).sum())
        .collect();
    Ok((Tensor::from_vec(spec.weight_shape(), gw)?, gb))
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes `upstream` where `input > 0`; the subgradient at exactly 0 is 0.
pub fn relu_grad(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    input.zip_with(upstream, |x, g| if x > 0.0 { g } else { 0.0 })
}

/// Space-to-depth. Output channel `c + C·(r·dy + dx)` holds input channel `c`
/// sampled at offset `(dy, dx)` of each `r×r` block.
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if r == 0 {
        return Err(TensorError::ZeroFactor);
    }
    let s = input.shape;
    for (dim, v) in [("h", s.h), ("w", s.w)] {
        if v % r != 0 {
            return Err(TensorError::NotDivisible {
                dim,
                size: v,
                factor: r,
            });
        }
    }
    let out_shape = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut out = Tensor::zeros(out_shape)?;
    for n in 0..s.n {
        for dy in 0..r {
            for dx in 0..r {
                for c in 0..s.c {
                    let oc = c + s.c * (r * dy + dx);
                    let src = input.plane(n, c);
                    let dst = out.plane_mut(n, oc);
                    for y in 0..out_shape.h {
                        let srow = &src[(y * r + dy) * s.w..];
                        for (x, d) in dst[y * out_shape.w..(y + 1) * out_shape.w].iter_mut().enumerate() {
                            *d = srow[x * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Depth-to-space, the exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if r == 0 {
        return Err(TensorError::ZeroFactor);
    }
    let s = input.shape;
    if !s.c.is_multiple_of(r * r) {
        return Err(TensorError::NotDivisible {
            dim: "c",
            size: s.c,
            factor: r * r,
        });
    }
    let oc_count = s.c / (r * r);
    let out_shape = Shape::new(s.n, oc_count, s.h * r, s.w * r);
    let mut out = Tensor::zeros(out_shape)?;
    for n in 0..s.n {
        for dy in 0..r {
            for dx in 0..r {
                for c in 0..oc_count {
                    let ic = c + oc_count * (r * dy + dx);
                    let src = input.plane(n, ic);
                    let dst = out.plane_mut(n, c);
                    for y in 0..s.h {
                        let drow = &mut dst[(y * r + dy) * out_shape.w..];
                        for (x, &v) in src[y * s.w..(y + 1) * s.w].iter().enumerate() {
                            drow[x * r + dx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
