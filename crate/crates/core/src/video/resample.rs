//! Separable resamplers: Lanczos (a = 5) for downscaling, Catmull-Rom bicubic
//! for chroma upscaling.
//!
//! Both use the pixel-centre alignment `x_src = (x_dst + 0.5)·in/out − 0.5`,
//! replicate edges, and normalise the weights of every output sample.

use std::f64::consts::PI;

use super::{Frame, Plane, Result, VideoError};
use crate::sep::{Sep2d, Taps1d};

pub const LANCZOS_TAPS: usize = 5;
const CUBIC_A: f64 = -0.5;

/// Floating-point plane used between resampling passes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneF {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl PlaneF {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        PlaneF { width, height, data }
    }

    pub fn from_plane(p: &Plane) -> Self {
        PlaneF {
            width: p.width,
            height: p.height,
            data: p.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| quantize(v)).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn transpose(&self) -> PlaneF {
        PlaneF::from_fn(self.height, self.width, |x, y| self.at(y, x))
    }
}

/// Clamp to `[0, 255]` and round half up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor() as u8
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let x = PI * t;
        x.sin() / x
    }
}

fn lanczos(t: f64, a: f64) -> f64 {
    if t.abs() < a {
        sinc(t) * sinc(t / a)
    } else {
        0.0
    }
}

fn normalised(row: Vec<(isize, f64)>) -> Vec<(isize, f64)> {
    let total: f64 = row.iter().map(|(_, w)| w).sum();
    row.into_iter().map(|(i, w)| (i, w / total)).collect()
}

/// Lanczos taps; when shrinking, the kernel is stretched by the ratio so it
/// also acts as the anti-alias filter.
fn lanczos_1d(in_len: usize, out_len: usize) -> Taps1d {
    let ratio = in_len as f64 / out_len as f64;
    let stretch = ratio.max(1.0);
    let a = LANCZOS_TAPS as f64;
    let support = a * stretch;
    Taps1d::clamped(in_len, out_len, |o| {
        let centre = (o as f64 + 0.5) * ratio - 0.5;
        let lo = (centre - support).floor() as isize;
        let hi = (centre + support).ceil() as isize;
        normalised(
            (lo..=hi)
                .map(|j| (j, lanczos((j as f64 - centre) / stretch, a)))
                .filter(|&(_, w)| w != 0.0)
                .collect(),
        )
    })
}

fn cubic(d: f64) -> f64 {
    let d = d.abs();
    if d <= 1.0 {
        ((CUBIC_A + 2.0) * d - (CUBIC_A + 3.0)) * d * d + 1.0
    } else if d < 2.0 {
        ((CUBIC_A * d - 5.0 * CUBIC_A) * d + 8.0 * CUBIC_A) * d - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

fn bicubic_1d(in_len: usize, factor: usize) -> Taps1d {
    Taps1d::clamped(in_len, in_len * factor, |o| {
        let centre = (o as f64 + 0.5) / factor as f64 - 0.5;
        let base = centre.floor() as isize;
        normalised((base - 1..=base + 2).map(|j| (j, cubic(j as f64 - centre))).collect())
    })
}

fn check_dims(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(VideoError::ZeroDimension { width: w, height: h });
    }
    Ok(())
}

pub fn lanczos_resize_f(plane: &PlaneF, out_w: usize, out_h: usize) -> Result<PlaneF> {
    check_dims(out_w, out_h)?;
    check_dims(plane.width, plane.height)?;
    let op = Sep2d {
        x: lanczos_1d(plane.width, out_w),
        y: lanczos_1d(plane.height, out_h),
    };
    Ok(PlaneF {
        width: out_w,
        height: out_h,
        data: op.apply(&plane.data),
    })
}

pub fn lanczos_resize(plane: &Plane, out_w: usize, out_h: usize) -> Result<Plane> {
    Ok(lanczos_resize_f(&PlaneF::from_plane(plane), out_w, out_h)?.to_plane())
}

fn check_factor(factor: u32) -> Result<usize> {
    match factor {
        3 | 4 => Ok(factor as usize),
        f => Err(VideoError::UnsupportedFactor(f)),
    }
}

pub fn bicubic_upsample_f(plane: &PlaneF, factor: u32) -> Result<PlaneF> {
    let s = check_factor(factor)?;
    check_dims(plane.width, plane.height)?;
    let op = Sep2d {
        x: bicubic_1d(plane.width, s),
        y: bicubic_1d(plane.height, s),
    };
    Ok(PlaneF {
        width: plane.width * s,
        height: plane.height * s,
        data: op.apply(&plane.data),
    })
}

pub fn bicubic_upsample(plane: &Plane, factor: u32) -> Result<Plane> {
    Ok(bicubic_upsample_f(&PlaneF::from_plane(plane), factor)?.to_plane())
}

/// Lanczos-downscales every plane of a frame by an integer factor.
pub fn downscale_frame(frame: &Frame, factor: u32) -> Result<Frame> {
    let f = check_factor(factor)?;
    let (w, h) = (frame.width(), frame.height());
    // 4:2:0 output must itself have even dimensions.
    let align = match frame.sampling {
        super::Sampling::C420 => 2 * f,
        super::Sampling::C444 => f,
    };
    if w % align != 0 || h % align != 0 {
        return Err(VideoError::NotDivisible {
            width: w,
            height: h,
            factor: align,
            padded_w: w.div_ceil(align) * align,
            padded_h: h.div_ceil(align) * align,
        });
    }
    let shrink = |p: &Plane| lanczos_resize(p, p.width / f, p.height / f);
    Frame::new(
        frame.sampling,
        shrink(&frame.y)?,
        shrink(&frame.cb)?,
        shrink(&frame.cr)?,
    )
}
