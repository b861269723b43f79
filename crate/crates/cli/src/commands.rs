use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use rtsr::metrics::{
    evaluate_frames, evaluate_sequence, qp_from_name, MetricsError, QualityReport, ReportMeta, VmafTool,
};
use rtsr::model::{count_macs, load_weights, save_weights, ModelConfig, WeightFileError};
use rtsr::train::{
    prepare_patches, train_stage1_from, train_stage2, EpochReport, PatchDataset, PrepareOptions, Stage, TeacherKind,
    TrainError, TrainRecipe,
};
use rtsr::video::{
    downscale_frame, parse_y4m, read_raw_yuv, read_y4m, synth::synthetic_sequence, write_raw_yuv, write_y4m_file,
    Frame, Sampling, SequenceHeader, SrPipeline, VideoError, Y4mWriter,
};

use crate::args::*;
use crate::exit;

#[derive(Debug)]
struct BudgetExceeded {
    macs_per_pixel: f64,
    budget: f64,
}

impl std::fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.1} MACs/pixel exceeds the budget of {:.1}",
            self.macs_per_pixel, self.budget
        )
    }
}

impl std::error::Error for BudgetExceeded {}

fn video_code(e: &VideoError) -> u8 {
    match e {
        VideoError::Io(_) => exit::IO,
        _ => exit::VALIDATION,
    }
}

/// Maps an error chain onto the process exit classes.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return exit::IO;
        }
        if let Some(e) = cause.downcast_ref::<VideoError>() {
            return video_code(e);
        }
        if let Some(e) = cause.downcast_ref::<WeightFileError>() {
            return match e {
                WeightFileError::Io(_) => exit::IO,
                _ => exit::VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            return match e {
                MetricsError::Io(_) => exit::IO,
                MetricsError::Video(v) => video_code(v),
                _ => exit::VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::NonFinite { .. } => exit::NUMERIC,
                TrainError::Io(_) => exit::IO,
                TrainError::Video(v) => video_code(v),
                _ => exit::VALIDATION,
            };
        }
    }
    exit::VALIDATION
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Downscale(_) => "downscale",
        Command::Upscale(_) => "upscale",
        Command::Prepare(_) => "prepare",
        Command::Teachers(_) => "teachers",
        Command::Train(_) => "train",
        Command::Distill(_) => "distill",
        Command::Eval(_) => "eval",
        Command::Complexity(_) => "complexity",
    }
}

fn command_seed(c: &Command) -> Option<u64> {
    match c {
        Command::Synth(a) => Some(a.seed),
        Command::Prepare(a) => Some(a.seed),
        Command::Train(a) => Some(a.optim.seed),
        Command::Distill(a) => Some(a.optim.seed),
        _ => None,
    }
}

/// Hash of the fully resolved command (config file values and defaults included).
pub fn config_hash(c: &Command) -> String {
    let digest = Sha256::digest(format!("{c:?}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn stanza(c: &Command) -> String {
    format!(
        "# rtsr {} command={} seed={} config_sha256={}",
        env!("CARGO_PKG_VERSION"),
        command_name(c),
        command_seed(c).map_or("-".to_string(), |s| s.to_string()),
        config_hash(c)
    )
}

pub fn run(cli: &Cli) -> Result<()> {
    println!("{}", stanza(&cli.command));
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Downscale(a) => downscale(a),
        Command::Upscale(a) => upscale(a),
        Command::Prepare(a) => prepare(a),
        Command::Teachers(a) => teachers(a),
        Command::Train(a) => train(a),
        Command::Distill(a) => distill(a),
        Command::Eval(a) => eval(a, &cli.command),
        Command::Complexity(a) => complexity(a),
    }
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("yuv"))
}

fn raw_dims(path: &Path, raw: &RawGeometry) -> Result<(usize, usize)> {
    match (raw.width, raw.height) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => bail!("{}: raw .yuv input needs --width and --height", path.display()),
    }
}

fn read_sequence(path: &Path, raw: &RawGeometry) -> Result<(SequenceHeader, Vec<Frame>)> {
    if is_raw(path) {
        let (w, h) = raw_dims(path, raw)?;
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let frames = read_raw_yuv(BufReader::new(file), w, h, Sampling::C420)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok((SequenceHeader::new(w, h, 30, 1, Sampling::C420), frames))
    } else {
        read_y4m(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_sequence(path: &Path, header: &SequenceHeader, frames: &[Frame]) -> Result<()> {
    if is_raw(path) {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_raw_yuv(frames, BufWriter::new(file))?.flush()?;
    } else {
        write_y4m_file(path, header, frames).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.width == 0 || a.height == 0 || !a.width.is_multiple_of(2) || !a.height.is_multiple_of(2) || a.frames == 0 {
        bail!("synthetic sequences need positive even dimensions and at least one frame");
    }
    let (header, frames) = synthetic_sequence(a.width, a.height, a.frames, a.seed);
    write_sequence(&a.out, &header, &frames)?;
    println!(
        "wrote {} frames {}x{} to {}",
        frames.len(),
        a.width,
        a.height,
        a.out.display()
    );
    Ok(())
}

fn downscale(a: &DownscaleArgs) -> Result<()> {
    let (header, frames) = read_sequence(&a.input, &a.raw)?;
    let small = frames
        .iter()
        .map(|f| downscale_frame(f, a.factor))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("downscaling {} by {}", a.input.display(), a.factor))?;
    let f = a.factor as usize;
    let out_header = header.resized(header.width / f, header.height / f);
    write_sequence(&a.out, &out_header, &small)?;
    println!(
        "{}x{} -> {}x{}, {} frames",
        header.width,
        header.height,
        out_header.width,
        out_header.height,
        small.len()
    );
    Ok(())
}

fn upscale(a: &UpscaleArgs) -> Result<()> {
    let weights = load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let scale = weights.config.scale;
    if let Some(want) = a.scale {
        if want != scale {
            bail!(
                "weights in {} are ×{scale}, but ×{want} was requested",
                a.weights.display()
            );
        }
    }
    let pipeline = SrPipeline::new(&weights, a.batch);
    let s = scale as usize;
    let start = Instant::now();
    let count;
    if is_raw(&a.input) {
        let (header, frames) = read_sequence(&a.input, &a.raw)?;
        let out = pipeline.process(&frames)?;
        count = out.len();
        write_sequence(&a.out, &header.resized(header.width * s, header.height * s), &out)?;
    } else {
        let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
        let reader = parse_y4m(BufReader::new(file)).with_context(|| format!("reading {}", a.input.display()))?;
        let h = reader.header().clone();
        let out_file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        let mut writer = Y4mWriter::new(h.resized(h.width * s, h.height * s), BufWriter::new(out_file))?;
        let mut pending = Vec::with_capacity(a.batch.max(1));
        let mut n = 0;
        let flush = |pending: &mut Vec<Frame>, writer: &mut Y4mWriter<_>| -> Result<usize> {
            let out = pipeline.process(pending)?;
            for f in &out {
                writer.write_frame(f)?;
            }
            pending.clear();
            Ok(out.len())
        };
        for frame in reader {
            pending.push(frame.with_context(|| format!("reading {}", a.input.display()))?);
            if pending.len() == a.batch.max(1) {
                n += flush(&mut pending, &mut writer)?;
            }
        }
        if !pending.is_empty() {
            n += flush(&mut pending, &mut writer)?;
        }
        writer.finish()?.flush()?;
        count = n;
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "upscaled {count} frames ×{scale}: {:.2} frames/s, {:.1} ms/frame",
        count as f64 / secs.max(1e-9),
        1e3 * secs / count.max(1) as f64
    );
    Ok(())
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let opts = PrepareOptions {
        scale: a.scale,
        patch: a.patch,
        crops_per_frame: a.crops_per_frame,
        seed: a.seed,
        augment: a.augment,
    };
    let ds = prepare_patches(&a.lr_dir, &a.hr_dir, &opts)?;
    ds.save(&a.out)
        .with_context(|| format!("writing dataset to {}", a.out.display()))?;
    println!(
        "{} patches (×{}, {}px) in {}",
        ds.len(),
        ds.scale,
        ds.patch,
        a.out.display()
    );
    Ok(())
}

fn teachers(a: &TeachersArgs) -> Result<()> {
    let mut ds = PatchDataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let kind = match a.kind {
        TeacherSource::GroundTruth => TeacherKind::GroundTruth,
        TeacherSource::Bicubic => TeacherKind::Bicubic,
    };
    ds.add_teacher(&a.name, kind)?;
    ds.save(&a.dataset)?;
    println!("teacher `{}` added to {} records", a.name, ds.len());
    Ok(())
}

fn recipe(model: ModelConfig, stage: Stage, o: &OptimArgs) -> TrainRecipe {
    let mut r = TrainRecipe::new(model, stage);
    r.epochs = o.epochs;
    r.batch_size = o.batch;
    r.lr0 = o.lr;
    r.lr_decay_every = o.lr_decay_every;
    r.lr_decay_factor = o.lr_decay_factor;
    r.adam.beta1 = o.beta1;
    r.adam.beta2 = o.beta2;
    r.adam.eps = o.eps;
    r.adam.weight_decay = o.weight_decay;
    r.seed = o.seed;
    r.max_steps = o.max_steps;
    r
}

fn finish_training(o: &OptimArgs, out: &Path, outcome: &rtsr::train::TrainOutcome) -> Result<()> {
    save_weights(&outcome.weights, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(log) = &o.log {
        std::fs::write(log, outcome.log.to_csv()).with_context(|| format!("writing {}", log.display()))?;
    }
    println!(
        "{} steps, final loss {:.6}; weights in {}",
        outcome.log.rows.len(),
        outcome.log.rows.last().map_or(f64::NAN, |r| r.loss),
        out.display()
    );
    Ok(())
}

fn print_epoch(r: &EpochReport) {
    println!("epoch {} mean loss {:.6}", r.epoch, r.mean_loss);
}

fn train(a: &TrainArgs) -> Result<()> {
    let ds = PatchDataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let model = ModelConfig::new(ds.scale, a.blocks, a.channels)?;
    let r = recipe(model, Stage::Supervised, &a.optim);
    r.validate()?;
    let init = rtsr::model::build_model(model, r.seed)?;
    let outcome = train_stage1_from(&ds, &r, init, &mut print_epoch)?;
    finish_training(&a.optim, &a.out, &outcome)
}

fn distill(a: &DistillArgs) -> Result<()> {
    let ds = PatchDataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let student = load_weights(&a.student).with_context(|| format!("loading {}", a.student.display()))?;
    let mut r = recipe(student.config, Stage::Distill, &a.optim);
    r.alpha = a.alpha;
    r.validate()?;
    let outcome = train_stage2(&ds, student, &r, &mut print_epoch)?;
    finish_training(&a.optim, &a.out, &outcome)
}

fn eval(a: &EvalArgs, cmd: &Command) -> Result<()> {
    let mut report = if is_raw(&a.reference) || is_raw(&a.test) {
        let (_, r) = read_sequence(&a.reference, &a.raw)?;
        let (_, t) = read_sequence(&a.test, &a.raw)?;
        let meta = ReportMeta {
            sequence: a
                .test
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            qp: qp_from_name(&a.test),
            scale: None,
        };
        QualityReport::new(meta, evaluate_frames(&r, &t)?)
    } else {
        evaluate_sequence(&a.reference, &a.test)
            .with_context(|| format!("evaluating {} against {}", a.test.display(), a.reference.display()))?
    };
    report.meta.scale = a.scale;
    if let Some(program) = &a.vmaf {
        let dir = std::env::temp_dir().join(format!("rtsr-vmaf-{}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        let score = VmafTool::new(program).run(&a.reference, &a.test, &dir.join("vmaf.json"));
        let _ = std::fs::remove_dir_all(&dir);
        report.vmaf = Some(score?);
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    let mut summary = report.summary_json();
    summary["config_sha256"] = serde_json::Value::String(config_hash(cmd));
    summary["version"] = serde_json::Value::String(env!("CARGO_PKG_VERSION").into());
    if let Some(json) = &a.json {
        std::fs::write(json, serde_json::to_string_pretty(&summary)?)
            .with_context(|| format!("writing {}", json.display()))?;
    }
    if let Some(m) = report.means() {
        println!(
            "{} frames: PSNR-Y {:.4} dB, SSIM-Y {:.6}, MS-SSIM-Y {:.6}",
            report.frames.len(),
            m.psnr_y,
            m.ssim_y,
            m.ms_ssim_y
        );
    }
    if let Some(v) = report.vmaf {
        println!("VMAF {v:.4}");
    }
    Ok(())
}

fn complexity(a: &ComplexityArgs) -> Result<()> {
    let model = ModelConfig::new(a.scale, a.blocks, a.channels)?;
    let report = count_macs(&model, a.height, a.width)?;
    print!("{}", report.to_table());
    if report.macs_per_output_pixel >= a.budget {
        return Err(BudgetExceeded {
            macs_per_pixel: report.macs_per_output_pixel,
            budget: a.budget,
        }
        .into());
    }
    println!("within budget of {:.0} MACs/pixel", a.budget);
    Ok(())
}
