//! Headerless planar `.yuv` files; dimensions and sampling come from the caller.

use std::io::{Read, Write};

use super::{Frame, Plane, Result, Sampling, VideoError};

pub fn read_raw_yuv<R: Read>(mut input: R, width: usize, height: usize, sampling: Sampling) -> Result<Vec<Frame>> {
    if width == 0 || height == 0 {
        return Err(VideoError::ZeroDimension { width, height });
    }
    if sampling == Sampling::C420 && (!width.is_multiple_of(2) || !height.is_multiple_of(2)) {
        return Err(VideoError::OddDimensions { width, height });
    }
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let size = sampling.frame_bytes(width, height);
    if buf.len() % size != 0 {
        return Err(VideoError::TruncatedFrame {
            index: buf.len() / size,
            expected: size,
            found: buf.len() % size,
        });
    }
    let (cw, ch) = sampling.chroma_dims(width, height);
    buf.chunks_exact(size)
        .map(|c| {
            let (y, rest) = c.split_at(width * height);
            let (cb, cr) = rest.split_at(cw * ch);
            Frame::new(
                sampling,
                Plane::new(width, height, y.to_vec())?,
                Plane::new(cw, ch, cb.to_vec())?,
                Plane::new(cw, ch, cr.to_vec())?,
            )
        })
        .collect()
}

pub fn write_raw_yuv<'a, W: Write>(frames: impl IntoIterator<Item = &'a Frame>, mut out: W) -> Result<W> {
    for f in frames {
        out.write_all(&f.y.data)?;
        out.write_all(&f.cb.data)?;
        out.write_all(&f.cr.data)?;
    }
    out.flush()?;
    Ok(out)
}
