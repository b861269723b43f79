//! Brute-force reference implementations. Written from the textbook
//! definitions without sharing any code path with the library.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rtsr::tensor::{conv2d, pixel_shuffle, pixel_unshuffle, ConvSpec, Shape, Tensor};
use rtsr::video::{bicubic_upsample_f, lanczos_resize_f, PlaneF};

use super::{rng, uniform};

/// Cross-correlation with zero padding, accumulated in f64.
pub fn conv_direct(x: &Tensor, w: &Tensor, b: &[f32]) -> Vec<f64> {
    let s = x.shape();
    let ws = w.shape();
    let (ph, pw) = (ws.h as isize / 2, ws.w as isize / 2);
    let mut out = Vec::with_capacity(s.n * ws.n * s.h * s.w);
    for n in 0..s.n {
        for o in 0..ws.n {
            for y in 0..s.h as isize {
                for xx in 0..s.w as isize {
                    let mut acc = b[o] as f64;
                    for i in 0..ws.c {
                        for ky in 0..ws.h as isize {
                            for kx in 0..ws.w as isize {
                                let (sy, sx) = (y + ky - ph, xx + kx - pw);
                                if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                    continue;
                                }
                                acc += w.at(o, i, ky as usize, kx as usize) as f64
                                    * x.at(n, i, sy as usize, sx as usize) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Max error of the library conv against [`conv_direct`], relative to the
/// largest output magnitude.
pub fn conv_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, ci, co) = (r.gen_range(1..3), r.gen_range(1..6), r.gen_range(1..6));
    let (h, w) = (r.gen_range(1..10), r.gen_range(1..10));
    let k = [1, 3, 5][r.gen_range(0..3)];
    let kw = [1, 3, 5][r.gen_range(0..3)];
    let spec = ConvSpec::new(ci, co, k, kw).unwrap();
    let x = uniform(&mut r, Shape::new(n, ci, h, w), -1.0, 1.0);
    let wt = uniform(&mut r, spec.weight_shape(), -1.0, 1.0);
    let b: Vec<f32> = (0..co).map(|_| r.gen_range(-1.0..1.0)).collect();
    let got = conv2d(&x, &wt, &b, &spec).unwrap();
    let want = conv_direct(&x, &wt, &b);
    let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    got.data()
        .iter()
        .zip(&want)
        .map(|(&g, w)| (g as f64 - w).abs())
        .fold(0.0, f64::max)
        / scale
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
    }
}

/// Dense `out_len × in_len` Lanczos-5 matrix. Source positions outside the
/// signal fold onto the nearest edge sample.
pub fn lanczos_matrix(in_len: usize, out_len: usize) -> Vec<Vec<f64>> {
    let ratio = in_len as f64 / out_len as f64;
    let stretch = ratio.max(1.0);
    (0..out_len)
        .map(|o| {
            let centre = (o as f64 + 0.5) * ratio - 0.5;
            let mut row = vec![0.0; in_len];
            let mut total = 0.0;
            let reach = (5.0 * stretch).ceil() as isize + 2;
            for j in centre.floor() as isize - reach..=centre.floor() as isize + reach {
                let t = (j as f64 - centre) / stretch;
                let k = if t.abs() < 5.0 { sinc(t) * sinc(t / 5.0) } else { 0.0 };
                row[j.clamp(0, in_len as isize - 1) as usize] += k;
                total += k;
            }
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect()
}

/// `Wy · P · Wxᵀ` by explicit quadruple summation.
pub fn lanczos_dense(p: &PlaneF, out_w: usize, out_h: usize) -> PlaneF {
    let wx = lanczos_matrix(p.width, out_w);
    let wy = lanczos_matrix(p.height, out_h);
    PlaneF::from_fn(out_w, out_h, |ox, oy| {
        let mut acc = 0.0;
        for sy in 0..p.height {
            for sx in 0..p.width {
                acc += wy[oy][sy] * wx[ox][sx] * p.at(sx, sy);
            }
        }
        acc
    })
}

fn random_plane(r: &mut ChaCha8Rng, w: usize, h: usize) -> PlaneF {
    let data = (0..w * h).map(|_| r.gen_range(0.0..255.0)).collect();
    PlaneF {
        width: w,
        height: h,
        data,
    }
}

fn max_diff(a: &PlaneF, b: &PlaneF) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Library Lanczos against the dense oracle on a random small plane, in
/// grey levels. Covers both shrinking and enlarging.
pub fn lanczos_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let f = r.gen_range(3..5);
    let (ow, oh) = (r.gen_range(1..7), r.gen_range(1..7));
    let p = random_plane(&mut r, ow * f, oh * f);
    let down = max_diff(&lanczos_resize_f(&p, ow, oh).unwrap(), &lanczos_dense(&p, ow, oh));
    let (uw, uh) = (r.gen_range(1..20), r.gen_range(1..20));
    let (qw, qh) = (r.gen_range(1..8), r.gen_range(1..8));
    let q = random_plane(&mut r, qw, qh);
    let up = max_diff(&lanczos_resize_f(&q, uw, uh).unwrap(), &lanczos_dense(&q, uw, uh));
    down.max(up)
}

/// Keys cubic convolution kernel with a = -1/2, as usually tabulated.
fn keys(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// One output sample of a bicubic ×`f` upsample from its 4×4 neighbourhood.
pub fn bicubic_point(p: &PlaneF, f: usize, ox: usize, oy: usize) -> f64 {
    let cx = (ox as f64 + 0.5) / f as f64 - 0.5;
    let cy = (oy as f64 + 0.5) / f as f64 - 0.5;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut acc = 0.0;
    for j in -1..=2isize {
        let sy = cy.floor() as isize + j;
        for i in -1..=2isize {
            let sx = cx.floor() as isize + i;
            acc += keys(sy as f64 - cy) * keys(sx as f64 - cx) * p.at(clamp(sx, p.width), clamp(sy, p.height));
        }
    }
    acc
}

pub fn bicubic_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let f = r.gen_range(3..5usize);
    let (pw, ph) = (r.gen_range(1..9), r.gen_range(1..9));
    let p = random_plane(&mut r, pw, ph);
    let got = bicubic_upsample_f(&p, f as u32).unwrap();
    let want = PlaneF::from_fn(p.width * f, p.height * f, |x, y| bicubic_point(&p, f, x, y));
    max_diff(&got, &want)
}

/// `unshuffle ∘ shuffle` and `shuffle ∘ unshuffle` are both the identity.
pub fn shuffle_round_trip(seed: u64) -> bool {
    let mut r = rng(seed);
    let f = r.gen_range(1..5);
    let (n, c, h, w) = (
        r.gen_range(1..3),
        r.gen_range(1..4),
        r.gen_range(1..5),
        r.gen_range(1..5),
    );
    let deep = uniform(&mut r, Shape::new(n, c * f * f, h, w), -1.0, 1.0);
    let wide = uniform(&mut r, Shape::new(n, c, h * f, w * f), -1.0, 1.0);
    let a = pixel_unshuffle(&pixel_shuffle(&deep, f).unwrap(), f).unwrap();
    let b = pixel_shuffle(&pixel_unshuffle(&wide, f).unwrap(), f).unwrap();
    a == deep && b == wide
}
