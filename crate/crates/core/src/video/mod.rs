//! 8-bit planar YCbCr frames, y4m/raw I/O, chroma conversion, resampling and
//! the upscaling pipeline.

mod chroma;
mod pipeline;
mod raw;
mod resample;
pub mod synth;
mod y4m;

pub use chroma::{downsample_444_to_420, upsample_420_to_444_nn};
pub use pipeline::{frame_to_tensor, nn_baseline, sr_pipeline, SrPipeline, DEFAULT_BATCH};
pub use raw::{read_raw_yuv, write_raw_yuv};
pub use resample::{
    bicubic_upsample, bicubic_upsample_f, downscale_frame, lanczos_resize, lanczos_resize_f, quantize, PlaneF,
    LANCZOS_TAPS,
};
pub use y4m::{parse_y4m, read_y4m, write_y4m, write_y4m_file, Colorspace, SequenceHeader, Y4mReader, Y4mWriter};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("bad magic: stream does not start with YUV4MPEG2")]
    BadMagic,
    #[error("malformed y4m header: {0}")]
    BadHeader(String),
    #[error("unsupported colorspace `{0}`")]
    UnsupportedColorspace(String),
    #[error("frame {index}: expected FRAME marker")]
    MissingFrameMarker { index: usize },
    #[error("frame {index}: truncated payload ({found} of {expected} bytes)")]
    TruncatedFrame {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("frame does not match sequence: {0}")]
    FrameMismatch(String),
    #[error("4:2:0 needs even dimensions, got {width}x{height}")]
    OddDimensions { width: usize, height: usize },
    #[error("expected {expected:?} input, found {found:?}")]
    WrongSampling { expected: Sampling, found: Sampling },
    #[error("dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("unsupported resampling factor {0}")]
    UnsupportedFactor(u32),
    #[error("{width}x{height} is not divisible by {factor} (pad to {padded_w}x{padded_h})")]
    NotDivisible {
        width: usize,
        height: usize,
        factor: usize,
        padded_w: usize,
        padded_h: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VideoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Sampling {
    C420,
    C444,
}

impl Sampling {
    /// Chroma plane size for a `width × height` luma plane.
    pub fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Sampling::C420 => (width / 2, height / 2),
            Sampling::C444 => (width, height),
        }
    }

    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        let (cw, ch) = self.chroma_dims(width, height);
        width * height + 2 * cw * ch
    }
}

/// One 8-bit sample grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(VideoError::ZeroDimension { width, height });
        }
        if data.len() != width * height {
            return Err(VideoError::FrameMismatch(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub sampling: Sampling,
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl Frame {
    pub fn new(sampling: Sampling, y: Plane, cb: Plane, cr: Plane) -> Result<Self> {
        let (w, h) = (y.width, y.height);
        if sampling == Sampling::C420 && (w % 2 != 0 || h % 2 != 0) {
            return Err(VideoError::OddDimensions { width: w, height: h });
        }
        let (cw, ch) = sampling.chroma_dims(w, h);
        for p in [&cb, &cr] {
            if (p.width, p.height) != (cw, ch) {
                return Err(VideoError::FrameMismatch(format!(
                    "chroma plane {}x{} does not fit {sampling:?} luma {w}x{h}",
                    p.width, p.height
                )));
            }
        }
        Ok(Frame { sampling, y, cb, cr })
    }

    /// Flat grey frame.
    pub fn filled(width: usize, height: usize, sampling: Sampling, luma: u8, chroma: u8) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(VideoError::ZeroDimension { width, height });
        }
        let (cw, ch) = sampling.chroma_dims(width, height);
        Frame::new(
            sampling,
            Plane::filled(width, height, luma),
            Plane::filled(cw, ch, chroma),
            Plane::filled(cw, ch, chroma),
        )
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn payload_len(&self) -> usize {
        self.sampling.frame_bytes(self.width(), self.height())
    }

    /// Crop at luma coordinates; for 4:2:0 the origin and size must be even.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
        let (cx, cy, cw, ch) = match self.sampling {
            Sampling::C420 => (x0 / 2, y0 / 2, w / 2, h / 2),
            Sampling::C444 => (x0, y0, w, h),
        };
        Frame {
            sampling: self.sampling,
            y: self.y.crop(x0, y0, w, h),
            cb: self.cb.crop(cx, cy, cw, ch),
            cr: self.cr.crop(cx, cy, cw, ch),
        }
    }
}
