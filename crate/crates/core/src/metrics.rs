//! Luma quality metrics and the sequence evaluation driver.
//!
//! PSNR, SSIM and MS-SSIM are computed on the Y plane at full resolution
//! without border cropping. Sequence scores are arithmetic means of the
//! per-frame values (PSNR is averaged in dB, not pooled over MSE).

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::losses::{ms_ssim_plane, ssim_plane, LossError, MsSsimConfig};
use crate::video::{parse_y4m, Frame, Plane, VideoError};

/// Score reported for identical planes.
pub const PSNR_CAP: f64 = 100.0;

/// Frames scored concurrently while streaming.
const CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("plane size mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    Dims {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("frame count mismatch: reference has {reference}, test has {test}")]
    Length { reference: usize, test: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error("vmaf: {0}")]
    Vmaf(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check(a: &Plane, b: &Plane) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(MetricsError::Dims {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    Ok(())
}

fn normalised(p: &Plane) -> Vec<f64> {
    p.data.iter().map(|&v| v as f64 / 255.0).collect()
}

pub fn psnr_plane(a: &Plane, b: &Plane) -> Result<f64> {
    check(a, b)?;
    let sse: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    if sse == 0 {
        return Ok(PSNR_CAP);
    }
    let mse = sse as f64 / a.data.len() as f64;
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP))
}

pub fn psnr_y(reference: &Frame, test: &Frame) -> Result<f64> {
    psnr_plane(&reference.y, &test.y)
}

pub fn ssim_y(reference: &Frame, test: &Frame) -> Result<f64> {
    check(&reference.y, &test.y)?;
    let (w, h) = (reference.width(), reference.height());
    Ok(ssim_plane(&normalised(&reference.y), &normalised(&test.y), h, w)?)
}

/// MS-SSIM with as many scales (up to five) as the frame supports.
pub fn ms_ssim_y(reference: &Frame, test: &Frame) -> Result<f64> {
    check(&reference.y, &test.y)?;
    let (w, h) = (reference.width(), reference.height());
    let cfg = MsSsimConfig::fitting(h, w)?;
    Ok(ms_ssim_plane(
        &normalised(&reference.y),
        &normalised(&test.y),
        h,
        w,
        &cfg,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameScores {
    pub frame: usize,
    pub psnr_y: f64,
    pub ssim_y: f64,
    pub ms_ssim_y: f64,
}

pub fn score_frame(index: usize, reference: &Frame, test: &Frame) -> Result<FrameScores> {
    Ok(FrameScores {
        frame: index,
        psnr_y: psnr_y(reference, test)?,
        ssim_y: ssim_y(reference, test)?,
        ms_ssim_y: ms_ssim_y(reference, test)?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportMeta {
    pub sequence: String,
    pub qp: Option<u32>,
    pub scale: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub meta: ReportMeta,
    pub frames: Vec<FrameScores>,
    pub vmaf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Means {
    pub psnr_y: f64,
    pub ssim_y: f64,
    pub ms_ssim_y: f64,
}

impl QualityReport {
    pub fn new(meta: ReportMeta, frames: Vec<FrameScores>) -> Self {
        QualityReport {
            meta,
            frames,
            vmaf: None,
        }
    }

    /// Arithmetic means of the per-frame columns; `None` for an empty report.
    pub fn means(&self) -> Option<Means> {
        if self.frames.is_empty() {
            return None;
        }
        let n = self.frames.len() as f64;
        let mean = |f: fn(&FrameScores) -> f64| self.frames.iter().map(f).sum::<f64>() / n;
        Some(Means {
            psnr_y: mean(|r| r.psnr_y),
            ssim_y: mean(|r| r.ssim_y),
            ms_ssim_y: mean(|r| r.ms_ssim_y),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,psnr_y,ssim_y,ms_ssim_y\n");
        for r in &self.frames {
            writeln!(s, "{},{:.6},{:.8},{:.8}", r.frame, r.psnr_y, r.ssim_y, r.ms_ssim_y).unwrap();
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sequence": self.meta.sequence,
            "qp": self.meta.qp,
            "scale": self.meta.scale,
            "frames": self.frames.len(),
            "mean": self.means(),
            "vmaf": self.vmaf,
        })
    }
}

/// Scores two frame streams pairwise, `CHUNK` frames at a time.
pub fn evaluate_streams<A, B>(reference: A, test: B) -> Result<Vec<FrameScores>>
where
    A: IntoIterator<Item = Result<Frame, VideoError>>,
    B: IntoIterator<Item = Result<Frame, VideoError>>,
{
    let (mut ra, mut tb) = (reference.into_iter(), test.into_iter());
    let mut rows = Vec::new();
    let (mut n_ref, mut n_test) = (0, 0);
    loop {
        let mut pairs = Vec::with_capacity(CHUNK);
        let mut ended = false;
        while pairs.len() < CHUNK {
            match (ra.next(), tb.next()) {
                (Some(a), Some(b)) => {
                    pairs.push((a?, b?));
                    n_ref += 1;
                    n_test += 1;
                }
                (None, None) => {
                    ended = true;
                    break;
                }
                (a, b) => {
                    n_ref += a.is_some() as usize + ra.by_ref().count();
                    n_test += b.is_some() as usize + tb.by_ref().count();
                    return Err(MetricsError::Length {
                        reference: n_ref,
                        test: n_test,
                    });
                }
            }
        }
        let base = rows.len();
        let scored: Vec<Result<FrameScores>> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, (a, b))| score_frame(base + i, a, b))
            .collect();
        for r in scored {
            rows.push(r?);
        }
        if ended {
            return Ok(rows);
        }
    }
}

pub fn evaluate_frames(reference: &[Frame], test: &[Frame]) -> Result<Vec<FrameScores>> {
    evaluate_streams(reference.iter().cloned().map(Ok), test.iter().cloned().map(Ok))
}

/// `qpNN` token in a file name such as `city_qp31.y4m`.
pub fn qp_from_name(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    stem.split(['_', '-', '.'])
        .filter_map(|tok| tok.strip_prefix("qp"))
        .find_map(|digits| digits.parse().ok())
}

/// Streams two y4m files and scores every frame; metadata comes from the
/// test file name.
pub fn evaluate_sequence(reference: impl AsRef<Path>, test: impl AsRef<Path>) -> Result<QualityReport> {
    let (rp, tp) = (reference.as_ref(), test.as_ref());
    let ra = parse_y4m(BufReader::new(File::open(rp)?))?;
    let tb = parse_y4m(BufReader::new(File::open(tp)?))?;
    let (hr, ht) = (ra.header(), tb.header());
    if (hr.width, hr.height) != (ht.width, ht.height) {
        return Err(MetricsError::Dims {
            a_w: hr.width,
            a_h: hr.height,
            b_w: ht.width,
            b_h: ht.height,
        });
    }
    let frames = evaluate_streams(ra, tb)?;
    let meta = ReportMeta {
        sequence: tp
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        qp: qp_from_name(tp),
        scale: None,
    };
    Ok(QualityReport::new(meta, frames))
}

/// External VMAF tool invocation. The tool is called as
/// `<program> -r <ref> -d <test> --json -o <out>` and must write a JSON
/// document containing `pooled_metrics.vmaf.mean`.
#[derive(Debug, Clone)]
pub struct VmafTool {
    pub program: PathBuf,
    pub extra_args: Vec<String>,
}

impl VmafTool {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        VmafTool {
            program: program.into(),
            extra_args: Vec::new(),
        }
    }

    pub fn run(&self, reference: &Path, test: &Path, json_out: &Path) -> Result<f64> {
        let status = Command::new(&self.program)
            .arg("-r")
            .arg(reference)
            .arg("-d")
            .arg(test)
            .arg("--json")
            .arg("-o")
            .arg(json_out)
            .args(&self.extra_args)
            .status()
            .map_err(|e| MetricsError::Vmaf(format!("cannot run {}: {e}", self.program.display())))?;
        if !status.success() {
            return Err(MetricsError::Vmaf(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        parse_vmaf_json(&std::fs::read_to_string(json_out)?)
    }
}

pub fn parse_vmaf_json(text: &str) -> Result<f64> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| MetricsError::Vmaf(e.to_string()))?;
    v.pointer("/pooled_metrics/vmaf/mean")
        .and_then(|m| m.as_f64())
        .ok_or_else(|| MetricsError::Vmaf("missing pooled_metrics.vmaf.mean".into()))
}
