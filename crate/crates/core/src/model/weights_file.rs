//! Binary weight file, little-endian throughout:
//!
//! ```text
//! "RTSRW001"                       8-byte magic (5-byte tag + 3-digit version)
//! u32 scale, u32 blocks, u32 channels, u32 tensor_count
//! per tensor: u32 rank, u32 dims[rank], u32 name_len, name (UTF-8)
//! f32 payload, tensors in table order
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelConfig, ModelError, ModelWeights};

pub const WEIGHT_MAGIC: &[u8; 8] = b"RTSRW001";
const TAG_LEN: usize = 5;

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic: not a weight file")]
    BadMagic,
    #[error("weight file version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { expected: String, found: String },
    #[error("weight file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("shape table mismatch at tensor {index}: expected {expected}, found {found}")]
    ShapeTable {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("header describes an invalid model: {0}")]
    Config(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_weights<W: Write>(weights: &ModelWeights, mut out: W) -> Result<(), WeightFileError> {
    let tensors = weights.named_tensors();
    let mut buf = Vec::with_capacity(64 + 4 * weights.param_count());
    buf.extend_from_slice(WEIGHT_MAGIC);
    let c = &weights.config;
    for v in [c.scale, c.blocks as u32, c.channels as u32, tensors.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (name, dims, _) in &tensors {
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    for (_, _, data) in &tensors {
        for v in data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<(), WeightFileError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_weights(weights, &mut file)?;
    file.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightFileError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightFileError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_weights<R: Read>(mut input: R) -> Result<ModelWeights, WeightFileError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    let magic = cur
        .take(WEIGHT_MAGIC.len(), "magic")
        .map_err(|_| WeightFileError::BadMagic)?;
    if magic[..TAG_LEN] != WEIGHT_MAGIC[..TAG_LEN] {
        return Err(WeightFileError::BadMagic);
    }
    if magic != WEIGHT_MAGIC {
        return Err(WeightFileError::VersionMismatch {
            expected: String::from_utf8_lossy(&WEIGHT_MAGIC[TAG_LEN..]).into_owned(),
            found: String::from_utf8_lossy(&magic[TAG_LEN..]).into_owned(),
        });
    }

    let scale = cur.u32("header")?;
    let blocks = cur.u32("header")? as usize;
    let channels = cur.u32("header")? as usize;
    let count = cur.u32("header")? as usize;
    let config = ModelConfig::new(scale, blocks, channels)?;
    let mut weights = ModelWeights::zeros(config)?;

    let expected: Vec<(String, Vec<usize>)> = weights.named_tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
    if count != expected.len() {
        return Err(WeightFileError::ShapeTable {
            index: count.min(expected.len()),
            expected: format!("{} tensors", expected.len()),
            found: format!("{count} tensors"),
        });
    }
    for (index, (name, dims)) in expected.iter().enumerate() {
        let rank = cur.u32("shape table")? as usize;
        let mut found_dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            found_dims.push(cur.u32("shape table")? as usize);
        }
        let name_len = cur.u32("shape table")? as usize;
        let found_name =
            std::str::from_utf8(cur.take(name_len, "shape table")?).map_err(|_| WeightFileError::BadName)?;
        if found_name != name || &found_dims != dims {
            return Err(WeightFileError::ShapeTable {
                index,
                expected: format!("{name} {dims:?}"),
                found: format!("{found_name} {found_dims:?}"),
            });
        }
    }
    for slice in weights.param_slices_mut() {
        let bytes = cur.take(4 * slice.len(), "payload")?;
        for (v, b) in slice.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if cur.pos != buf.len() {
        return Err(WeightFileError::TrailingData(buf.len() - cur.pos));
    }
    Ok(weights)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, WeightFileError> {
    read_weights(io::BufReader::new(fs::File::open(path)?))
}
