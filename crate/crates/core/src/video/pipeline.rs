//! Decoded 4:2:0 frames in, upscaled 4:2:0 frames out.
//!
//! Per frame: nearest-neighbour chroma to 4:4:4, scale to `[0, 1]`, network
//! luma prediction, clamp and quantise; chroma planes are bicubic-upscaled
//! directly at 4:2:0 resolution.

use super::resample::{bicubic_upsample, quantize};
use super::{upsample_420_to_444_nn, Frame, Plane, Result, Sampling, VideoError};
use crate::model::{forward, ModelWeights};
use crate::tensor::{Shape, Tensor};

/// Frames per network call.
pub const DEFAULT_BATCH: usize = 16;

/// Stacks frames into an `n×3×H×W` tensor of 4:4:4 samples in `[0, 1]`.
pub fn frame_to_tensor(frames: &[Frame]) -> Result<Tensor> {
    let first = frames
        .first()
        .ok_or_else(|| VideoError::FrameMismatch("empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(frames.len() * 3 * w * h);
    for f in frames {
        if (f.width(), f.height()) != (w, h) {
            return Err(VideoError::FrameMismatch(format!(
                "batch mixes {}x{} and {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        let full = match f.sampling {
            Sampling::C420 => upsample_420_to_444_nn(f)?,
            Sampling::C444 => f.clone(),
        };
        for p in [&full.y, &full.cb, &full.cr] {
            data.extend(p.data.iter().map(|&v| v as f32 / 255.0));
        }
    }
    Ok(Tensor::from_vec(Shape::new(frames.len(), 3, h, w), data).map_err(crate::model::ModelError::from)?)
}

pub struct SrPipeline<'a> {
    weights: &'a ModelWeights,
    batch: usize,
}

impl<'a> SrPipeline<'a> {
    pub fn new(weights: &'a ModelWeights, batch: usize) -> Self {
        SrPipeline {
            weights,
            batch: batch.max(1),
        }
    }

    pub fn scale(&self) -> u32 {
        self.weights.config.scale
    }

    /// Upscales `frames` in groups of at most `batch`; output order equals input order.
    pub fn process(&self, frames: &[Frame]) -> Result<Vec<Frame>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(self.batch) {
            out.extend(self.process_batch(chunk)?);
        }
        Ok(out)
    }

    fn process_batch(&self, frames: &[Frame]) -> Result<Vec<Frame>> {
        for f in frames {
            if f.sampling != Sampling::C420 {
                return Err(VideoError::WrongSampling {
                    expected: Sampling::C420,
                    found: f.sampling,
                });
            }
        }
        let luma = forward(self.weights, &frame_to_tensor(frames)?)?;
        let s = luma.shape();
        frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let y = Plane::new(
                    s.w,
                    s.h,
                    luma.plane(i, 0).iter().map(|&v| quantize(v as f64 * 255.0)).collect(),
                )?;
                Frame::new(
                    Sampling::C420,
                    y,
                    bicubic_upsample(&f.cb, self.scale())?,
                    bicubic_upsample(&f.cr, self.scale())?,
                )
            })
            .collect()
    }
}

pub fn sr_pipeline(frames: &[Frame], weights: &ModelWeights, batch: usize) -> Result<Vec<Frame>> {
    SrPipeline::new(weights, batch).process(frames)
}

/// Network-free reference: nearest-neighbour luma, bicubic chroma.
pub fn nn_baseline(frame: &Frame, scale: u32) -> Result<Frame> {
    let s = scale as usize;
    let src = &frame.y;
    let (w, h) = (src.width * s, src.height * s);
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| src.at(x / s, y / s))
        .collect();
    Frame::new(
        frame.sampling,
        Plane::new(w, h, data)?,
        bicubic_upsample(&frame.cb, scale)?,
        bicubic_upsample(&frame.cr, scale)?,
    )
}
