//! YUV4MPEG2 reading and writing.
//!
//! Header tokens are kept verbatim (including `X` extensions) and written
//! back in canonical order `W H F I A C X…`, so canonical files round-trip
//! byte for byte. Per-frame parameters are not preserved.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Frame, Plane, Result, Sampling, VideoError};

const MAGIC: &str = "YUV4MPEG2";
const FRAME: &str = "FRAME";
const MAX_LINE: usize = 4096;

/// The `C` token. The three 4:2:0 variants share a sample layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Colorspace {
    pub token: String,
    pub sampling: Sampling,
}

impl Colorspace {
    pub fn parse(token: &str) -> Result<Self> {
        let sampling = match token {
            "420" | "420jpeg" | "420mpeg2" => Sampling::C420,
            "444" => Sampling::C444,
            other => return Err(VideoError::UnsupportedColorspace(other.to_string())),
        };
        Ok(Colorspace {
            token: token.to_string(),
            sampling,
        })
    }

    pub fn for_sampling(sampling: Sampling) -> Self {
        let token = match sampling {
            Sampling::C420 => "420",
            Sampling::C444 => "444",
        };
        Colorspace {
            token: token.into(),
            sampling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub interlace: Option<String>,
    pub aspect: Option<(u32, u32)>,
    /// `None` when the stream omits `C` (implies 4:2:0).
    pub colorspace: Option<Colorspace>,
    pub extensions: Vec<String>,
}

impl SequenceHeader {
    pub fn new(width: usize, height: usize, fps_num: u32, fps_den: u32, sampling: Sampling) -> Self {
        SequenceHeader {
            width,
            height,
            fps_num,
            fps_den,
            interlace: Some("p".into()),
            aspect: Some((1, 1)),
            colorspace: Some(Colorspace::for_sampling(sampling)),
            extensions: Vec::new(),
        }
    }

    pub fn sampling(&self) -> Sampling {
        self.colorspace.as_ref().map_or(Sampling::C420, |c| c.sampling)
    }

    pub fn frame_bytes(&self) -> usize {
        self.sampling().frame_bytes(self.width, self.height)
    }

    /// Same stream parameters at a new size.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        SequenceHeader {
            width,
            height,
            ..self.clone()
        }
    }

    pub fn with_sampling(&self, sampling: Sampling) -> Self {
        let colorspace = match &self.colorspace {
            Some(c) if c.sampling == sampling => Some(c.clone()),
            _ => Some(Colorspace::for_sampling(sampling)),
        };
        SequenceHeader {
            colorspace,
            ..self.clone()
        }
    }

    fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split(' ');
        if tokens.next() != Some(MAGIC) {
            return Err(VideoError::BadMagic);
        }
        let bad = |t: &str| VideoError::BadHeader(format!("bad token `{t}`"));
        let (mut width, mut height, mut fps) = (None, None, None);
        let mut hdr = SequenceHeader {
            width: 0,
            height: 0,
            fps_num: 0,
            fps_den: 0,
            interlace: None,
            aspect: None,
            colorspace: None,
            extensions: Vec::new(),
        };
        for t in tokens.filter(|t| !t.is_empty()) {
            let (tag, val) = t.split_at(1);
            match tag {
                "W" => width = Some(val.parse::<usize>().map_err(|_| bad(t))?),
                "H" => height = Some(val.parse::<usize>().map_err(|_| bad(t))?),
                "F" => fps = Some(ratio(val).ok_or_else(|| bad(t))?),
                "I" => hdr.interlace = Some(val.to_string()),
                "A" => hdr.aspect = Some(ratio(val).ok_or_else(|| bad(t))?),
                "C" => hdr.colorspace = Some(Colorspace::parse(val)?),
                "X" => hdr.extensions.push(val.to_string()),
                _ => return Err(bad(t)),
            }
        }
        hdr.width = width.ok_or_else(|| VideoError::BadHeader("missing W".into()))?;
        hdr.height = height.ok_or_else(|| VideoError::BadHeader("missing H".into()))?;
        let (num, den) = fps.ok_or_else(|| VideoError::BadHeader("missing F".into()))?;
        if hdr.width == 0 || hdr.height == 0 {
            return Err(VideoError::ZeroDimension {
                width: hdr.width,
                height: hdr.height,
            });
        }
        if num == 0 || den == 0 {
            return Err(VideoError::BadHeader("frame rate must be positive".into()));
        }
        hdr.fps_num = num;
        hdr.fps_den = den;
        if hdr.sampling() == Sampling::C420 && (!hdr.width.is_multiple_of(2) || !hdr.height.is_multiple_of(2)) {
            return Err(VideoError::OddDimensions {
                width: hdr.width,
                height: hdr.height,
            });
        }
        Ok(hdr)
    }

    fn to_line(&self) -> String {
        let mut s = format!(
            "{MAGIC} W{} H{} F{}:{}",
            self.width, self.height, self.fps_num, self.fps_den
        );
        if let Some(i) = &self.interlace {
            s.push_str(&format!(" I{i}"));
        }
        if let Some((a, b)) = self.aspect {
            s.push_str(&format!(" A{a}:{b}"));
        }
        if let Some(c) = &self.colorspace {
            s.push_str(&format!(" C{}", c.token));
        }
        for x in &self.extensions {
            s.push_str(&format!(" X{x}"));
        }
        s.push('\n');
        s
    }
}

fn ratio(v: &str) -> Option<(u32, u32)> {
    let (a, b) = v.split_once(':')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Reads one `\n`-terminated line. `Ok(None)` at clean end of stream.
fn read_line<R: BufRead>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut line = Vec::new();
    let n = r.by_ref().take(MAX_LINE as u64).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(line))
}

/// Lazily decodes frames from a y4m stream.
pub struct Y4mReader<R> {
    header: SequenceHeader,
    reader: R,
    index: usize,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let line = read_line(&mut reader)?.ok_or(VideoError::BadMagic)?;
        if !line.starts_with(MAGIC.as_bytes()) {
            return Err(VideoError::BadMagic);
        }
        if line.last() != Some(&b'\n') {
            return Err(VideoError::BadHeader("header line not terminated".into()));
        }
        let text = std::str::from_utf8(&line[..line.len() - 1])
            .map_err(|_| VideoError::BadHeader("header is not ASCII".into()))?;
        let header = SequenceHeader::parse(text)?;
        Ok(Y4mReader {
            header,
            reader,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &SequenceHeader {
        &self.header
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.index;
        let Some(line) = read_line(&mut self.reader)? else {
            return Ok(None);
        };
        if !line.starts_with(FRAME.as_bytes()) || line.last() != Some(&b'\n') {
            return Err(VideoError::MissingFrameMarker { index });
        }
        let hdr = &self.header;
        let expected = hdr.frame_bytes();
        let mut buf = Vec::with_capacity(expected);
        let found = self.reader.by_ref().take(expected as u64).read_to_end(&mut buf)?;
        if found != expected {
            return Err(VideoError::TruncatedFrame { index, expected, found });
        }
        let (w, h) = (hdr.width, hdr.height);
        let sampling = hdr.sampling();
        let (cw, ch) = sampling.chroma_dims(w, h);
        let cr = buf.split_off(w * h + cw * ch);
        let cb = buf.split_off(w * h);
        self.index += 1;
        Ok(Some(Frame::new(
            sampling,
            Plane::new(w, h, buf)?,
            Plane::new(cw, ch, cb)?,
            Plane::new(cw, ch, cr)?,
        )?))
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Header plus a lazy frame iterator.
pub fn parse_y4m<R: BufRead>(reader: R) -> Result<Y4mReader<R>> {
    Y4mReader::new(reader)
}

/// Reads a whole file into memory.
pub fn read_y4m(path: impl AsRef<Path>) -> Result<(SequenceHeader, Vec<Frame>)> {
    let reader = Y4mReader::new(BufReader::new(File::open(path)?))?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

pub struct Y4mWriter<W: Write> {
    header: SequenceHeader,
    out: W,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(header: SequenceHeader, mut out: W) -> Result<Self> {
        if header.width == 0 || header.height == 0 {
            return Err(VideoError::ZeroDimension {
                width: header.width,
                height: header.height,
            });
        }
        if header.sampling() == Sampling::C420 && (!header.width.is_multiple_of(2) || !header.height.is_multiple_of(2))
        {
            return Err(VideoError::OddDimensions {
                width: header.width,
                height: header.height,
            });
        }
        out.write_all(header.to_line().as_bytes())?;
        Ok(Y4mWriter { header, out })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        let h = &self.header;
        if (frame.width(), frame.height(), frame.sampling) != (h.width, h.height, h.sampling()) {
            return Err(VideoError::FrameMismatch(format!(
                "frame {}x{} {:?} vs header {}x{} {:?}",
                frame.width(),
                frame.height(),
                frame.sampling,
                h.width,
                h.height,
                h.sampling()
            )));
        }
        self.out.write_all(b"FRAME\n")?;
        self.out.write_all(&frame.y.data)?;
        self.out.write_all(&frame.cb.data)?;
        self.out.write_all(&frame.cr.data)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_y4m<'a, W: Write>(
    header: &SequenceHeader,
    frames: impl IntoIterator<Item = &'a Frame>,
    out: W,
) -> Result<W> {
    let mut w = Y4mWriter::new(header.clone(), out)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}

/// Convenience: write a file.
pub fn write_y4m_file(path: impl AsRef<Path>, header: &SequenceHeader, frames: &[Frame]) -> Result<()> {
    write_y4m(header, frames, BufWriter::new(File::create(path)?))?;
    Ok(())
}
