//! Training objectives on luma predictions, each returning its value and the
//! gradient w.r.t. the prediction.
//!
//! Tensors are `f32`; reductions and the SSIM/pyramid arithmetic run in `f64`
//! so that small per-pixel perturbations remain visible in the scalar.

mod laplacian;
mod ssim;

pub use laplacian::{laplacian_loss, laplacian_loss_with, laplacian_pyramid, LaplacianConfig, LaplacianPyramid};
pub use ssim::{
    ms_ssim, ms_ssim_loss, ms_ssim_plane, ssim, ssim_loss, ssim_plane, MsSsimConfig, SsimParams, MS_SSIM_EXPONENTS,
    SSIM_WINDOW,
};

use thiserror::Error;

use crate::tensor::{check_same, Shape, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("{what} needs single-channel input, found {found} channels")]
    NotSingleChannel { what: &'static str, found: usize },
    #[error("{what} needs at least {min}x{min} pixels, found {h}x{w}")]
    TooSmall {
        what: &'static str,
        min: usize,
        h: usize,
        w: usize,
    },
    #[error("invalid loss configuration: {0}")]
    Config(&'static str),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

/// A scalar loss and its gradient w.r.t. the first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Tensor,
}

impl LossValue {
    fn zero_like(shape: Shape) -> Result<Self> {
        Ok(LossValue {
            value: 0.0,
            grad: Tensor::zeros(shape)?,
        })
    }

    /// `self += k · other`.
    fn accumulate(&mut self, k: f64, other: &LossValue) {
        self.value += k * other.value;
        let kf = k as f32;
        for (g, o) in self.grad.data_mut().iter_mut().zip(other.grad.data()) {
            *g += kf * o;
        }
    }
}

fn from_f64(shape: Shape, v: Vec<f64>) -> Result<Tensor> {
    Ok(Tensor::from_vec(shape, v.into_iter().map(|g| g as f32).collect())?)
}

/// Mean absolute difference; gradient `sign(x − y) / N` with `sign(0) = 0`.
pub fn l1_loss(x: &Tensor, y: &Tensor) -> Result<LossValue> {
    check_same(x.shape(), y.shape())?;
    let n = x.len() as f64;
    let mut total = 0.0;
    let grad = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            total += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossValue {
        value: total / n,
        grad: from_f64(x.shape(), grad)?,
    })
}

/// Mean squared difference; gradient `2 (x − y) / N`.
pub fn l2_loss(x: &Tensor, y: &Tensor) -> Result<LossValue> {
    check_same(x.shape(), y.shape())?;
    let n = x.len() as f64;
    let mut total = 0.0;
    let grad = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            total += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossValue {
        value: total / n,
        grad: from_f64(x.shape(), grad)?,
    })
}

/// Weights of the combined perceptual objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerceptualWeights {
    pub l1: f64,
    pub ssim: f64,
    pub l2: f64,
    pub ms_ssim: f64,
}

impl Default for PerceptualWeights {
    fn default() -> Self {
        PerceptualWeights {
            l1: 0.3,
            ssim: 0.2,
            l2: 0.1,
            ms_ssim: 0.4,
        }
    }
}

impl PerceptualWeights {
    pub fn sum(&self) -> f64 {
        self.l1 + self.ssim + self.l2 + self.ms_ssim
    }
}

/// `0.3·L1 + 0.2·(1 − SSIM) + 0.1·L2 + 0.4·(1 − MS-SSIM)`.
///
/// MS-SSIM uses as many scales (up to five) as the image size allows.
pub fn perceptual_loss(x: &Tensor, y: &Tensor) -> Result<LossValue> {
    perceptual_loss_with(&PerceptualWeights::default(), x, y)
}

pub fn perceptual_loss_with(weights: &PerceptualWeights, x: &Tensor, y: &Tensor) -> Result<LossValue> {
    check_same(x.shape(), y.shape())?;
    let s = x.shape();
    let ms_cfg = MsSsimConfig::fitting(s.h, s.w)?;
    let mut total = LossValue::zero_like(s)?;
    total.accumulate(weights.l1, &l1_loss(x, y)?);
    total.accumulate(weights.ssim, &ssim_loss(x, y)?);
    total.accumulate(weights.l2, &l2_loss(x, y)?);
    total.accumulate(weights.ms_ssim, &ms_ssim_loss(x, y, &ms_cfg)?);
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistillConfig {
    /// Weight of the ground-truth term.
    pub alpha: f64,
    pub laplacian: LaplacianConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 0.1,
            laplacian: LaplacianConfig::default(),
        }
    }
}

/// `α·L_lap(student, gt) + Σ_i L_lap(student, teacher_i)`. An empty teacher
/// list leaves only the supervised term.
pub fn distill_loss(
    student: &Tensor,
    ground_truth: &Tensor,
    teachers: &[&Tensor],
    cfg: &DistillConfig,
) -> Result<LossValue> {
    if cfg.alpha.is_nan() || cfg.alpha < 0.0 {
        return Err(LossError::Config("alpha must be non-negative"));
    }
    check_same(student.shape(), ground_truth.shape())?;
    for t in teachers {
        check_same(student.shape(), t.shape())?;
    }
    let mut total = LossValue::zero_like(student.shape())?;
    total.accumulate(cfg.alpha, &laplacian_loss_with(&cfg.laplacian, student, ground_truth)?);
    for t in teachers {
        total.accumulate(1.0, &laplacian_loss_with(&cfg.laplacian, student, t)?);
    }
    Ok(total)
}
