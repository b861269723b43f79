//! SSIM and multi-scale SSIM with analytic gradients.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5) evaluated only
//! where it fits inside the image ("valid" filtering), K1 = 0.01, K2 = 0.03,
//! dynamic range 1.

use super::{from_f64, LossError, LossValue, Result};
use crate::sep::{Sep2d, Taps1d};
use crate::tensor::{check_same, Tensor};

pub const SSIM_WINDOW: usize = 11;

/// Per-scale exponents of the standard five-scale MS-SSIM.
pub const MS_SSIM_EXPONENTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Floor applied to per-scale terms before exponentiation; negative
/// contrast-structure values would otherwise make the product undefined.
const MS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub sigma: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.03,
            sigma: 1.5,
            data_range: 1.0,
        }
    }
}

impl SsimParams {
    fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    fn window(&self, h: usize, w: usize) -> Sep2d {
        let half = (SSIM_WINDOW / 2) as f64;
        let raw: Vec<f64> = (0..SSIM_WINDOW)
            .map(|k| (-(k as f64 - half).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let g: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let valid = |len: usize| {
            Taps1d::new(
                len,
                (0..len + 1 - SSIM_WINDOW)
                    .map(|o| g.iter().enumerate().map(|(k, &wt)| (o + k, wt)).collect())
                    .collect(),
            )
        };
        Sep2d {
            x: valid(w),
            y: valid(h),
        }
    }
}

fn check_size(what: &'static str, h: usize, w: usize) -> Result<()> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(LossError::TooSmall {
            what,
            min: SSIM_WINDOW,
            h,
            w,
        });
    }
    Ok(())
}

struct Terms {
    ssim: f64,
    cs: f64,
    grad: Option<Vec<f64>>,
}

/// Mean SSIM and mean contrast-structure of one plane pair. With
/// `coeffs = (a, b)` also returns `∂(a·ssim + b·cs)/∂x`.
fn ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize, p: &SsimParams, coeffs: Option<(f64, f64)>) -> Terms {
    let win = p.window(h, w);
    let (c1, c2) = (p.c1(), p.c2());
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = win.apply(x);
    let my = win.apply(y);
    let exx = win.apply(&sq(x, x));
    let eyy = win.apply(&sq(y, y));
    let exy = win.apply(&sq(x, y));
    let m = mx.len() as f64;

    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    let want = coeffs.is_some();
    let (a, b) = coeffs.unwrap_or((0.0, 0.0));
    let mut d_mu = if want { vec![0.0; mx.len()] } else { Vec::new() };
    let mut d_exx = d_mu.clone();
    let mut d_exy = d_mu.clone();

    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let sxx = exx[i] - ux * ux;
        let syy = eyy[i] - uy * uy;
        let sxy = exy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + c1;
        let b1 = ux * ux + uy * uy + c1;
        let a2 = 2.0 * sxy + c2;
        let b2 = sxx + syy + c2;
        let l = a1 / b1;
        let cs = a2 / b2;
        ssim_sum += l * cs;
        cs_sum += cs;
        if want {
            let dl_dmu = (2.0 * uy - 2.0 * ux * l) / b1;
            let d_mu_partial = a * cs * dl_dmu;
            let k = a * l + b;
            let d_sxx = -k * cs / b2;
            let d_sxy = k * 2.0 / b2;
            d_mu[i] = (d_mu_partial - 2.0 * ux * d_sxx - uy * d_sxy) / m;
            d_exx[i] = d_sxx / m;
            d_exy[i] = d_sxy / m;
        }
    }

    let grad = want.then(|| {
        let g_mu = win.adjoint(&d_mu);
        let g_xx = win.adjoint(&d_exx);
        let g_xy = win.adjoint(&d_exy);
        (0..x.len())
            .map(|i| g_mu[i] + 2.0 * x[i] * g_xx[i] + y[i] * g_xy[i])
            .collect()
    });
    Terms {
        ssim: ssim_sum / m,
        cs: cs_sum / m,
        grad,
    }
}

/// Mean SSIM of two row-major planes already scaled to `[0, data_range]`.
pub fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> Result<f64> {
    check_size("ssim", h, w)?;
    Ok(ssim_terms(x, y, h, w, &SsimParams::default(), None).ssim)
}

fn planes(t: &Tensor, what: &'static str) -> Result<Vec<Vec<f64>>> {
    let s = t.shape();
    if s.c != 1 {
        return Err(LossError::NotSingleChannel { what, found: s.c });
    }
    Ok((0..s.n)
        .map(|n| t.plane(n, 0).iter().map(|&v| v as f64).collect())
        .collect())
}

type Planes = Vec<Vec<f64>>;

fn prepare(x: &Tensor, y: &Tensor, what: &'static str) -> Result<(Planes, Planes)> {
    check_same(x.shape(), y.shape())?;
    let px = planes(x, what)?;
    let py = planes(y, what)?;
    check_size(what, x.shape().h, x.shape().w)?;
    Ok((px, py))
}

/// Mean SSIM over the batch. Inputs are `n×1×h×w` with `h, w ≥ 11`.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (px, py) = prepare(x, y, "ssim")?;
    let s = x.shape();
    let p = SsimParams::default();
    Ok(px
        .iter()
        .zip(&py)
        .map(|(a, b)| ssim_terms(a, b, s.h, s.w, &p, None).ssim)
        .sum::<f64>()
        / s.n as f64)
}

/// `1 − ssim(x, y)` and its gradient w.r.t. `x`.
pub fn ssim_loss(x: &Tensor, y: &Tensor) -> Result<LossValue> {
    let (px, py) = prepare(x, y, "ssim")?;
    let s = x.shape();
    let p = SsimParams::default();
    let inv_n = 1.0 / s.n as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(x.len());
    for (a, b) in px.iter().zip(&py) {
        let t = ssim_terms(a, b, s.h, s.w, &p, Some((-inv_n, 0.0)));
        value += t.ssim;
        grad.extend(t.grad.unwrap());
    }
    Ok(LossValue {
        value: 1.0 - value * inv_n,
        grad: from_f64(s, grad)?,
    })
}

/// Number of scales; exponents are the first `scales` standard ones,
/// renormalised to sum to 1 when fewer than five are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsSsimConfig {
    pub scales: usize,
}

impl Default for MsSsimConfig {
    fn default() -> Self {
        MsSsimConfig { scales: 5 }
    }
}

impl MsSsimConfig {
    /// Smallest image side supporting `scales` scales (176 for five).
    pub fn min_size(scales: usize) -> usize {
        SSIM_WINDOW << scales.saturating_sub(1)
    }

    /// As many scales (at most five) as an `h × w` image supports.
    pub fn fitting(h: usize, w: usize) -> Result<Self> {
        check_size("ms_ssim", h, w)?;
        let side = h.min(w);
        let scales = (1..=MS_SSIM_EXPONENTS.len())
            .rev()
            .find(|&s| (side >> (s - 1)) >= SSIM_WINDOW)
            .unwrap_or(1);
        Ok(MsSsimConfig { scales })
    }

    fn exponents(&self) -> Result<Vec<f64>> {
        if self.scales == 0 || self.scales > MS_SSIM_EXPONENTS.len() {
            return Err(LossError::Config("ms_ssim scales must be in 1..=5"));
        }
        if self.scales == MS_SSIM_EXPONENTS.len() {
            return Ok(MS_SSIM_EXPONENTS.to_vec());
        }
        let used = &MS_SSIM_EXPONENTS[..self.scales];
        let total: f64 = used.iter().sum();
        Ok(used.iter().map(|w| w / total).collect())
    }
}

/// 2×2 mean pooling, dropping a trailing odd row/column.
fn pool(h: usize, w: usize) -> Sep2d {
    let half = |len: usize| {
        Taps1d::new(
            len,
            (0..len / 2).map(|o| vec![(2 * o, 0.5), (2 * o + 1, 0.5)]).collect(),
        )
    };
    Sep2d { x: half(w), y: half(h) }
}

/// MS-SSIM of one plane pair and optionally `∂ms/∂x`.
fn ms_ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize, exps: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let p = SsimParams::default();
    let m = exps.len();
    let mut xs = vec![x.to_vec()];
    let mut ys = vec![y.to_vec()];
    let mut dims = vec![(h, w)];
    let mut pools = Vec::new();
    for _ in 1..m {
        let (ch, cw) = *dims.last().unwrap();
        let op = pool(ch, cw);
        xs.push(op.apply(xs.last().unwrap()));
        ys.push(op.apply(ys.last().unwrap()));
        dims.push(op.out_dims());
        pools.push(op);
    }
    let values: Vec<f64> = (0..m)
        .map(|j| {
            let t = ssim_terms(&xs[j], &ys[j], dims[j].0, dims[j].1, &p, None);
            if j + 1 == m {
                t.ssim
            } else {
                t.cs
            }
        })
        .collect();
    let clamped: Vec<f64> = values.iter().map(|v| v.max(MS_FLOOR)).collect();
    let ms: f64 = clamped.iter().zip(exps).map(|(v, e)| v.powf(*e)).product();
    if !want_grad {
        return (ms, None);
    }

    let mut carry: Option<Vec<f64>> = None;
    for j in (0..m).rev() {
        let d_val = if values[j] > MS_FLOOR {
            ms * exps[j] / clamped[j]
        } else {
            0.0
        };
        let coeffs = if j + 1 == m { (d_val, 0.0) } else { (0.0, d_val) };
        let mut g = ssim_terms(&xs[j], &ys[j], dims[j].0, dims[j].1, &p, Some(coeffs))
            .grad
            .unwrap();
        if let Some(c) = carry.take() {
            for (a, b) in g.iter_mut().zip(pools[j].adjoint(&c)) {
                *a += b;
            }
        }
        carry = Some(g);
    }
    (ms, carry)
}

pub fn ms_ssim(x: &Tensor, y: &Tensor, cfg: &MsSsimConfig) -> Result<f64> {
    let exps = check_ms(x, y, cfg)?;
    let (px, py) = prepare(x, y, "ms_ssim")?;
    let s = x.shape();
    Ok(px
        .iter()
        .zip(&py)
        .map(|(a, b)| ms_ssim_terms(a, b, s.h, s.w, &exps, false).0)
        .sum::<f64>()
        / s.n as f64)
}

/// `1 − ms_ssim(x, y)` and its gradient w.r.t. `x`.
pub fn ms_ssim_loss(x: &Tensor, y: &Tensor, cfg: &MsSsimConfig) -> Result<LossValue> {
    let exps = check_ms(x, y, cfg)?;
    let (px, py) = prepare(x, y, "ms_ssim")?;
    let s = x.shape();
    let inv_n = 1.0 / s.n as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(x.len());
    for (a, b) in px.iter().zip(&py) {
        let (v, g) = ms_ssim_terms(a, b, s.h, s.w, &exps, true);
        value += v;
        grad.extend(g.unwrap().into_iter().map(|g| -g * inv_n));
    }
    Ok(LossValue {
        value: 1.0 - value * inv_n,
        grad: from_f64(s, grad)?,
    })
}

/// MS-SSIM of two row-major planes already scaled to `[0, 1]`.
pub fn ms_ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &MsSsimConfig) -> Result<f64> {
    let exps = check_ms_dims(h, w, cfg)?;
    Ok(ms_ssim_terms(x, y, h, w, &exps, false).0)
}

fn check_ms(x: &Tensor, y: &Tensor, cfg: &MsSsimConfig) -> Result<Vec<f64>> {
    check_same(x.shape(), y.shape())?;
    check_ms_dims(x.shape().h, x.shape().w, cfg)
}

fn check_ms_dims(h: usize, w: usize, cfg: &MsSsimConfig) -> Result<Vec<f64>> {
    let exps = cfg.exponents()?;
    let min = MsSsimConfig::min_size(cfg.scales);
    if h.min(w) >> (cfg.scales - 1) < SSIM_WINDOW {
        return Err(LossError::TooSmall {
            what: "ms_ssim",
            min,
            h,
            w,
        });
    }
    Ok(exps)
}
