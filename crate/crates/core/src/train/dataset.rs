//! Patch datasets: extraction from paired sequences, augmentation, teacher
//! predictions and the on-disk layout.
//!
//! ```text
//! <dir>/manifest.txt            header line, then `id qp aug lr_path hr_path`
//! <dir>/patches/<id>.lr         3×p×p
//! <dir>/patches/<id>.hr         1×ps×ps
//! <dir>/teachers/<name>/<id>    1×ps×ps
//! ```
//!
//! Tensor files hold four little-endian `u16` dims `(n, c, h, w)` followed by
//! little-endian `f32` samples.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Result, TrainError};
use crate::metrics::qp_from_name;
use crate::tensor::{Shape, Tensor};
use crate::video::{bicubic_upsample_f, frame_to_tensor, parse_y4m, PlaneF};

pub const DEFAULT_PATCH: usize = 48;
const MANIFEST: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "# rtsr-patches v1";

/// Quarter turns counter-clockwise, then an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Augment {
    pub quarter_turns: u8,
    pub hflip: bool,
}

impl Augment {
    pub const ALL: [Augment; 8] = {
        let mut all = [Augment {
            quarter_turns: 0,
            hflip: false,
        }; 8];
        let mut i = 0;
        while i < 8 {
            all[i] = Augment {
                quarter_turns: (i / 2) as u8,
                hflip: i % 2 == 1,
            };
            i += 1;
        }
        all
    };

    /// `r0`, `r90f`, `r270`, ...
    pub fn tag(&self) -> String {
        format!(
            "r{}{}",
            90 * self.quarter_turns as u32,
            if self.hflip { "f" } else { "" }
        )
    }

    pub fn parse(tag: &str) -> Option<Self> {
        let body = tag.strip_prefix('r')?;
        let (deg, hflip) = match body.strip_suffix('f') {
            Some(d) => (d, true),
            None => (body, false),
        };
        let quarter_turns = match deg {
            "0" => 0,
            "90" => 1,
            "180" => 2,
            "270" => 3,
            _ => return None,
        };
        Some(Augment { quarter_turns, hflip })
    }

    fn apply_plane(&self, src: &[f32], h: usize, w: usize) -> (Vec<f32>, usize, usize) {
        let (mut data, mut h, mut w) = (src.to_vec(), h, w);
        for _ in 0..self.quarter_turns {
            let mut out = vec![0.0; data.len()];
            for y in 0..w {
                for x in 0..h {
                    out[y * h + x] = data[x * w + (w - 1 - y)];
                }
            }
            data = out;
            std::mem::swap(&mut h, &mut w);
        }
        if self.hflip {
            for row in data.chunks_mut(w) {
                row.reverse();
            }
        }
        (data, h, w)
    }

    /// Applies the transform to every plane of `t`.
    pub fn apply(&self, t: &Tensor) -> Tensor {
        let s = t.shape();
        let mut data = Vec::with_capacity(t.len());
        let (mut oh, mut ow) = (s.h, s.w);
        for n in 0..s.n {
            for c in 0..s.c {
                let (p, h, w) = self.apply_plane(t.plane(n, c), s.h, s.w);
                data.extend(p);
                (oh, ow) = (h, w);
            }
        }
        Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), data).expect("volume preserved")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub id: String,
    pub qp: Option<u32>,
    pub augment: Augment,
    /// `1×3×p×p` network input in `[0, 1]`.
    pub lr: Tensor,
    /// `1×1×ps×ps` ground-truth luma in `[0, 1]`.
    pub hr: Tensor,
    /// One `1×1×ps×ps` prediction per dataset teacher, in `teacher_names` order.
    pub teachers: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    GroundTruth,
    /// Catmull-Rom upscaling of the LR luma channel.
    Bicubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub scale: u32,
    pub patch: usize,
    pub teacher_names: Vec<String>,
    pub records: Vec<PatchRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub scale: u32,
    pub patch: usize,
    pub crops_per_frame: usize,
    pub seed: u64,
    pub augment: bool,
}

impl PrepareOptions {
    pub fn new(scale: u32, crops_per_frame: usize, seed: u64, augment: bool) -> Self {
        PrepareOptions {
            scale,
            patch: DEFAULT_PATCH,
            crops_per_frame,
            seed,
            augment,
        }
    }
}

fn crop(t: &Tensor, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(1, s.c, h, w), |_, c, y, x| t.at(0, c, y0 + y, x0 + x)).expect("non-empty crop")
}

/// `city_qp31` → `city`.
pub fn strip_qp(stem: &str) -> String {
    let parts: Vec<&str> = stem.split('_').collect();
    let kept: Vec<&str> = parts
        .iter()
        .copied()
        .filter(|p| !(p.len() > 2 && p.starts_with("qp") && p[2..].bytes().all(|b| b.is_ascii_digit())))
        .collect();
    kept.join("_")
}

fn y4m_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "y4m"))
        .collect();
    files.sort();
    Ok(files)
}

/// Cuts co-located LR/HR patch pairs from every LR sequence in `lr_dir`
/// and its ground truth in `hr_dir` (same name without the `_qpNN` token).
pub fn prepare_patches(lr_dir: &Path, hr_dir: &Path, opts: &PrepareOptions) -> Result<PatchDataset> {
    let s = opts.scale as usize;
    let p = opts.patch;
    if !(opts.scale == 3 || opts.scale == 4) || p == 0 || !p.is_multiple_of(2) || opts.crops_per_frame == 0 {
        return Err(TrainError::Dataset(format!(
            "invalid options: scale {} patch {p} crops {}",
            opts.scale, opts.crops_per_frame
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut records = Vec::new();
    let lr_files = y4m_files(lr_dir)?;
    if lr_files.is_empty() {
        return Err(TrainError::Dataset(format!("no .y4m files in {}", lr_dir.display())));
    }
    for lr_path in lr_files {
        let stem = lr_path.file_stem().unwrap().to_string_lossy().into_owned();
        let hr_path = hr_dir.join(format!("{}.y4m", strip_qp(&stem)));
        let open = |p: &Path| -> Result<_> {
            let f = File::open(p).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
            Ok(parse_y4m(BufReader::new(f))?)
        };
        let lr_seq = open(&lr_path)?;
        let hr_seq = open(&hr_path)?;
        let (lh, hh) = (lr_seq.header().clone(), hr_seq.header().clone());
        if hh.width != lh.width * s || hh.height != lh.height * s {
            return Err(TrainError::Dataset(format!(
                "{}: {}x{} ×{s} does not give {}x{} of {}",
                lr_path.display(),
                lh.width,
                lh.height,
                hh.width,
                hh.height,
                hr_path.display()
            )));
        }
        if lh.width < p || lh.height < p {
            return Err(TrainError::Dataset(format!(
                "{}: {}x{} is smaller than the {p}x{p} patch",
                lr_path.display(),
                lh.width,
                lh.height
            )));
        }
        let qp = qp_from_name(&lr_path);
        let mut lr_iter = lr_seq.into_iter();
        let mut hr_iter = hr_seq.into_iter();
        let mut frame = 0;
        loop {
            let (lf, hf) = match (lr_iter.next(), hr_iter.next()) {
                (Some(a), Some(b)) => (a?, b?),
                (None, None) => break,
                _ => {
                    return Err(TrainError::Dataset(format!(
                        "{} and {} differ in frame count",
                        lr_path.display(),
                        hr_path.display()
                    )))
                }
            };
            let lr_t = frame_to_tensor(std::slice::from_ref(&lf))?;
            let hr_y = Tensor::from_vec(
                Shape::new(1, 1, hf.height(), hf.width()),
                hf.y.data.iter().map(|&v| v as f32 / 255.0).collect(),
            )
            .map_err(crate::model::ModelError::from)?;
            for c in 0..opts.crops_per_frame {
                let x0 = rng.gen_range(0..=lh.width - p);
                let y0 = rng.gen_range(0..=lh.height - p);
                let augment = if opts.augment {
                    Augment::ALL[rng.gen_range(0..Augment::ALL.len())]
                } else {
                    Augment::default()
                };
                records.push(PatchRecord {
                    id: format!("{stem}_f{frame:04}_c{c:02}"),
                    qp,
                    augment,
                    lr: augment.apply(&crop(&lr_t, y0, x0, p, p)),
                    hr: augment.apply(&crop(&hr_y, y0 * s, x0 * s, p * s, p * s)),
                    teachers: Vec::new(),
                });
            }
            frame += 1;
        }
    }
    Ok(PatchDataset {
        scale: opts.scale,
        patch: p,
        teacher_names: Vec::new(),
        records,
    })
}

fn bicubic_teacher(lr: &Tensor, scale: u32) -> Result<Tensor> {
    let s = lr.shape();
    let plane = PlaneF {
        width: s.w,
        height: s.h,
        data: lr.plane(0, 0).iter().map(|&v| v as f64).collect(),
    };
    let up = bicubic_upsample_f(&plane, scale)?;
    Ok(Tensor::from_vec(
        Shape::new(1, 1, up.height, up.width),
        up.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect(),
    )
    .map_err(crate::model::ModelError::from)?)
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hr_size(&self) -> usize {
        self.patch * self.scale as usize
    }

    /// Appends one teacher prediction to every record.
    pub fn add_teacher(&mut self, name: &str, kind: TeacherKind) -> Result<()> {
        check_name(name)?;
        if self.teacher_names.iter().any(|n| n == name) {
            return Err(TrainError::Dataset(format!("teacher `{name}` already present")));
        }
        for r in &mut self.records {
            let pred = match kind {
                TeacherKind::GroundTruth => r.hr.clone(),
                TeacherKind::Bicubic => bicubic_teacher(&r.lr, self.scale)?,
            };
            r.teachers.push(pred);
        }
        self.teacher_names.push(name.to_string());
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("patches"))?;
        for name in &self.teacher_names {
            fs::create_dir_all(dir.join("teachers").join(name))?;
        }
        let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST))?);
        writeln!(manifest, "{MANIFEST_HEADER} scale={} patch={}", self.scale, self.patch)?;
        for r in &self.records {
            let lr_rel = format!("patches/{}.lr", r.id);
            let hr_rel = format!("patches/{}.hr", r.id);
            let qp = r.qp.map_or("-".to_string(), |q| q.to_string());
            writeln!(manifest, "{} {qp} {} {lr_rel} {hr_rel}", r.id, r.augment.tag())?;
            write_tensor_file(&dir.join(lr_rel), &r.lr)?;
            write_tensor_file(&dir.join(hr_rel), &r.hr)?;
            for (name, t) in self.teacher_names.iter().zip(&r.teachers) {
                write_tensor_file(&dir.join("teachers").join(name).join(&r.id), t)?;
            }
        }
        manifest.flush()?;
        Ok(())
    }

    /// Loads a dataset; every subdirectory of `teachers/` must hold a
    /// prediction for every record.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header
            .strip_prefix(MANIFEST_HEADER)
            .ok_or_else(|| TrainError::Dataset(format!("bad manifest header `{header}`")))?;
        let mut scale = None;
        let mut patch = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("scale", v)) => scale = v.parse().ok(),
                Some(("patch", v)) => patch = v.parse().ok(),
                _ => {}
            }
        }
        let (scale, patch): (u32, usize) = match (scale, patch) {
            (Some(s), Some(p)) => (s, p),
            _ => {
                return Err(TrainError::Dataset(format!(
                    "manifest header lacks scale/patch: `{header}`"
                )))
            }
        };

        let teacher_root = dir.join("teachers");
        let mut teacher_names: Vec<String> = if teacher_root.is_dir() {
            fs::read_dir(&teacher_root)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        } else {
            Vec::new()
        };
        teacher_names.sort();

        let hr_side = patch * scale as usize;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || TrainError::Dataset(format!("manifest line {}: `{line}`", lineno + 2));
            if f.len() != 5 {
                return Err(bad());
            }
            let qp = match f[1] {
                "-" => None,
                q => Some(q.parse().map_err(|_| bad())?),
            };
            let augment = Augment::parse(f[2]).ok_or_else(bad)?;
            let lr = read_tensor_file(&dir.join(f[3]))?;
            let hr = read_tensor_file(&dir.join(f[4]))?;
            expect_shape(&lr, Shape::new(1, 3, patch, patch), f[3])?;
            expect_shape(&hr, Shape::new(1, 1, hr_side, hr_side), f[4])?;
            let mut teachers = Vec::with_capacity(teacher_names.len());
            for name in &teacher_names {
                let path = teacher_root.join(name).join(f[0]);
                if !path.exists() {
                    return Err(TrainError::MissingTeacher {
                        id: f[0].to_string(),
                        teacher: name.clone(),
                    });
                }
                let t = read_tensor_file(&path)?;
                expect_shape(&t, hr.shape(), &path.to_string_lossy())?;
                teachers.push(t);
            }
            records.push(PatchRecord {
                id: f[0].to_string(),
                qp,
                augment,
                lr,
                hr,
                teachers,
            });
        }
        Ok(PatchDataset {
            scale,
            patch,
            teacher_names,
            records,
        })
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(TrainError::Dataset(format!("invalid teacher name `{name}`")));
    }
    Ok(())
}

fn expect_shape(t: &Tensor, shape: Shape, what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(TrainError::Dataset(format!(
            "{what}: expected {shape:?}, found {:?}",
            t.shape()
        )));
    }
    Ok(())
}

pub fn write_tensor_file(path: &Path, t: &Tensor) -> Result<()> {
    let s = t.shape();
    let mut out = BufWriter::new(File::create(path)?);
    for d in [s.n, s.c, s.h, s.w] {
        let d = u16::try_from(d).map_err(|_| TrainError::Dataset(format!("dimension {d} exceeds u16")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(TrainError::Dataset(format!("{}: missing dims header", path.display())));
    }
    let dim = |i: usize| u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
    let body = &bytes[8..];
    if body.len() != 4 * shape.volume() {
        return Err(TrainError::Dataset(format!(
            "{}: {:?} needs {} bytes of samples, found {}",
            path.display(),
            shape,
            4 * shape.volume(),
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::from_vec(shape, data).map_err(crate::model::ModelError::from)?)
}
