//! 4:2:0 ↔ 4:4:4. Chroma samples are treated as centred on their 2×2 luma block.

use super::{Frame, Plane, Result, Sampling, VideoError};

fn expect(frame: &Frame, sampling: Sampling) -> Result<()> {
    if frame.sampling != sampling {
        return Err(VideoError::WrongSampling {
            expected: sampling,
            found: frame.sampling,
        });
    }
    Ok(())
}

fn replicate(p: &Plane) -> Plane {
    let (w, h) = (p.width * 2, p.height * 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &p.data[(y / 2) * p.width..(y / 2 + 1) * p.width];
        data.extend(row.iter().flat_map(|&v| [v, v]));
    }
    Plane {
        width: w,
        height: h,
        data,
    }
}

fn box_mean(p: &Plane) -> Plane {
    let (w, h) = (p.width / 2, p.height / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = p.at(2 * x, 2 * y) as u32
                + p.at(2 * x + 1, 2 * y) as u32
                + p.at(2 * x, 2 * y + 1) as u32
                + p.at(2 * x + 1, 2 * y + 1) as u32;
            // half-up rounding of s / 4
            data.push(((s + 2) / 4) as u8);
        }
    }
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Nearest-neighbour chroma upsampling: each chroma sample fills its 2×2 block.
pub fn upsample_420_to_444_nn(frame: &Frame) -> Result<Frame> {
    expect(frame, Sampling::C420)?;
    Frame::new(
        Sampling::C444,
        frame.y.clone(),
        replicate(&frame.cb),
        replicate(&frame.cr),
    )
}

/// 2×2 box-mean chroma decimation, rounded half up.
pub fn downsample_444_to_420(frame: &Frame) -> Result<Frame> {
    expect(frame, Sampling::C444)?;
    if !frame.width().is_multiple_of(2) || !frame.height().is_multiple_of(2) {
        return Err(VideoError::OddDimensions {
            width: frame.width(),
            height: frame.height(),
        });
    }
    Frame::new(
        Sampling::C420,
        frame.y.clone(),
        box_mean(&frame.cb),
        box_mean(&frame.cr),
    )
}
