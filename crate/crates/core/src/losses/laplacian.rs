//! Laplacian pyramid (Burt–Adelson, 5-tap binomial kernel) and the weighted
//! L1 loss over its levels.
//!
//! Reduction blurs with `[1 4 6 4 1]/16` (edge replicate) and keeps even
//! samples, so odd sizes round up. Expansion interpolates with the matching
//! `[1 4 6 4 1]/8` polyphase filter.

use super::{from_f64, LossError, LossValue, Result};
use crate::sep::{Sep2d, Taps1d};
use crate::tensor::{check_same, Shape, Tensor};

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn reduce_1d(len: usize) -> Taps1d {
    Taps1d::clamped(len, len.div_ceil(2), |o| {
        let c = 2 * o as isize;
        BINOMIAL
            .iter()
            .enumerate()
            .map(move |(k, &wt)| (c + k as isize - 2, wt))
    })
}

fn expand_1d(coarse: usize, fine: usize) -> Taps1d {
    Taps1d::clamped(coarse, fine, |i| {
        let k = (i / 2) as isize;
        if i % 2 == 0 {
            vec![(k - 1, 0.125), (k, 0.75), (k + 1, 0.125)]
        } else {
            vec![(k, 0.5), (k + 1, 0.5)]
        }
    })
}

/// Operators for one level transition `fine (h, w)` ↔ `coarse`.
struct LevelOps {
    reduce: Sep2d,
    expand: Sep2d,
}

fn level_ops(h: usize, w: usize, levels: usize) -> (Vec<LevelOps>, Vec<(usize, usize)>) {
    let mut dims = vec![(h, w)];
    let mut ops = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (fh, fw) = *dims.last().unwrap();
        let reduce = Sep2d {
            x: reduce_1d(fw),
            y: reduce_1d(fh),
        };
        let (ch, cw) = reduce.out_dims();
        let expand = Sep2d {
            x: expand_1d(cw, fw),
            y: expand_1d(ch, fh),
        };
        ops.push(LevelOps { reduce, expand });
        dims.push((ch, cw));
    }
    (ops, dims)
}

/// Band-pass levels (finest first) followed by the low-pass residual.
fn decompose(plane: &[f64], ops: &[LevelOps]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(ops.len() + 1);
    let mut g = plane.to_vec();
    for op in ops {
        let coarse = op.reduce.apply(&g);
        let up = op.expand.apply(&coarse);
        out.push(g.iter().zip(&up).map(|(a, b)| a - b).collect());
        g = coarse;
    }
    out.push(g);
    out
}

/// Gradient w.r.t. the input plane given per-level gradients.
fn decompose_adjoint(mut level_grads: Vec<Vec<f64>>, ops: &[LevelOps]) -> Vec<f64> {
    // level_grads[j] is first the gradient w.r.t. band j, then w.r.t. Gaussian level j.
    // Coarse to fine so each band gradient is read before it is modified.
    for (j, op) in ops.iter().enumerate().rev() {
        let back = op.expand.adjoint(&level_grads[j]);
        for (a, b) in level_grads[j + 1].iter_mut().zip(back) {
            *a -= b;
        }
    }
    for j in (0..ops.len()).rev() {
        let down = ops[j].reduce.adjoint(&level_grads[j + 1]);
        for (a, b) in level_grads[j].iter_mut().zip(down) {
            *a += b;
        }
    }
    level_grads.swap_remove(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    /// Band-pass levels, finest first, then the low-pass residual.
    pub levels: Vec<Tensor>,
}

impl LaplacianPyramid {
    pub fn band_count(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn low_pass(&self) -> &Tensor {
        self.levels.last().unwrap()
    }

    /// Expand-and-add from the residual back to full resolution.
    pub fn reconstruct(&self) -> Result<Tensor> {
        let fine = self.levels[0].shape();
        let mut out = Vec::with_capacity(fine.volume());
        let (ops, _) = level_ops(fine.h, fine.w, self.band_count());
        for n in 0..fine.n {
            for c in 0..fine.c {
                let mut g: Vec<f64> = self.low_pass().plane(n, c).iter().map(|&v| v as f64).collect();
                for (j, op) in ops.iter().enumerate().rev() {
                    let band = self.levels[j].plane(n, c);
                    g = op
                        .expand
                        .apply(&g)
                        .iter()
                        .zip(band)
                        .map(|(u, &b)| u + b as f64)
                        .collect();
                }
                out.extend(g);
            }
        }
        from_f64(fine, out)
    }
}

fn check_pyramid_size(h: usize, w: usize, levels: usize) -> Result<()> {
    let min = 1usize << levels;
    if h < min || w < min {
        return Err(LossError::TooSmall {
            what: "laplacian pyramid",
            min,
            h,
            w,
        });
    }
    Ok(())
}

pub fn laplacian_pyramid(x: &Tensor, levels: usize) -> Result<LaplacianPyramid> {
    let s = x.shape();
    check_pyramid_size(s.h, s.w, levels)?;
    let (ops, dims) = level_ops(s.h, s.w, levels);
    let mut per_level: Vec<Vec<f64>> = dims
        .iter()
        .map(|(h, w)| Vec::with_capacity(s.n * s.c * h * w))
        .collect();
    for n in 0..s.n {
        for c in 0..s.c {
            let plane: Vec<f64> = x.plane(n, c).iter().map(|&v| v as f64).collect();
            for (dst, lvl) in per_level.iter_mut().zip(decompose(&plane, &ops)) {
                dst.extend(lvl);
            }
        }
    }
    let levels = per_level
        .into_iter()
        .zip(&dims)
        .map(|(data, &(h, w))| from_f64(Shape::new(s.n, s.c, h, w), data))
        .collect::<Result<_>>()?;
    Ok(LaplacianPyramid { levels })
}

/// Level count and per-level weights (band-pass levels, then low-pass).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LaplacianConfig {
    pub levels: usize,
    pub weights: Vec<f64>,
}

impl Default for LaplacianConfig {
    /// Five band-pass levels weighted `4^(j−1)`; the residual continues the
    /// progression with `4^5`.
    fn default() -> Self {
        LaplacianConfig {
            levels: 5,
            weights: (0..=5).map(|j| 4f64.powi(j)).collect(),
        }
    }
}

pub fn laplacian_loss(x: &Tensor, y: &Tensor) -> Result<LossValue> {
    laplacian_loss_with(&LaplacianConfig::default(), x, y)
}

/// `Σ_j w_j · mean|Lap_j(x) − Lap_j(y)|` over all levels including the
/// residual.
pub fn laplacian_loss_with(cfg: &LaplacianConfig, x: &Tensor, y: &Tensor) -> Result<LossValue> {
    if cfg.weights.len() != cfg.levels + 1 {
        return Err(LossError::Config("laplacian weights must have levels + 1 entries"));
    }
    check_same(x.shape(), y.shape())?;
    let s = x.shape();
    check_pyramid_size(s.h, s.w, cfg.levels)?;
    let (ops, dims) = level_ops(s.h, s.w, cfg.levels);
    let counts: Vec<f64> = dims.iter().map(|(h, w)| (s.n * s.c * h * w) as f64).collect();

    let mut value = 0.0;
    let mut grad = Vec::with_capacity(s.volume());
    for n in 0..s.n {
        for c in 0..s.c {
            let diff: Vec<f64> = x
                .plane(n, c)
                .iter()
                .zip(y.plane(n, c))
                .map(|(&a, &b)| a as f64 - b as f64)
                .collect();
            let levels = decompose(&diff, &ops);
            let level_grads: Vec<Vec<f64>> = levels
                .iter()
                .enumerate()
                .map(|(j, lvl)| {
                    let k = cfg.weights[j] / counts[j];
                    lvl.iter()
                        .map(|&v| {
                            value += k * v.abs();
                            k * sign(v)
                        })
                        .collect()
                })
                .collect();
            grad.extend(decompose_adjoint(level_grads, &ops));
        }
    }
    Ok(LossValue {
        value,
        grad: from_f64(s, grad)?,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
