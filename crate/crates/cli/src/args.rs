use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rtsr", version, about = "Real-time super-resolution for YCbCr 4:2:0 video")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic test sequence
    Synth(SynthArgs),
    /// Lanczos-downscale a sequence by 3 or 4
    Downscale(DownscaleArgs),
    /// Upscale a sequence with trained weights
    Upscale(UpscaleArgs),
    /// Cut training patches from paired LR/HR sequences
    Prepare(PrepareArgs),
    /// Add generated teacher predictions to a patch dataset
    Teachers(TeachersArgs),
    /// Supervised training (stage 1)
    Train(TrainArgs),
    /// Distillation from stored teacher predictions (stage 2)
    Distill(DistillArgs),
    /// Score a test sequence against a reference
    Eval(EvalArgs),
    /// Per-layer parameter and MAC accounting
    Complexity(ComplexityArgs),
}

/// Geometry for headerless `.yuv` input (4:2:0 assumed).
#[derive(Debug, Args, Clone, Copy)]
pub struct RawGeometry {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DownscaleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(3..=4))]
    pub factor: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub raw: RawGeometry,
}

#[derive(Debug, Args)]
pub struct UpscaleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Required factor; rejected if the weights were trained for another
    #[arg(long)]
    pub scale: Option<u32>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[command(flatten)]
    pub raw: RawGeometry,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub lr_dir: PathBuf,
    #[arg(long)]
    pub hr_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scale: u32,
    #[arg(long, default_value_t = 4)]
    pub crops_per_frame: usize,
    #[arg(long, default_value_t = 48)]
    pub patch: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TeacherSource {
    GroundTruth,
    Bicubic,
}

#[derive(Debug, Args)]
pub struct TeachersArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub name: String,
    #[arg(long, value_enum)]
    pub kind: TeacherSource,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub lr_decay_every: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay_factor: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// L2 penalty added to the gradient
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss log CSV path
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long, default_value_t = 24)]
    pub channels: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Stage-1 weights
    #[arg(long)]
    pub student: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Per-frame CSV path
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary path
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<u32>,
    /// External VMAF executable
    #[arg(long)]
    pub vmaf: Option<PathBuf>,
    #[command(flatten)]
    pub raw: RawGeometry,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long)]
    pub scale: u32,
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long, default_value_t = 24)]
    pub channels: usize,
    /// Input patch height used for the per-frame totals
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub width: usize,
    /// Ceiling on MACs per output pixel
    #[arg(long, default_value_t = 2000.0)]
    pub budget: f64,
}

/// Splices `key=value` lines from every `--config FILE` into the argument
/// list right after the subcommand, so explicit flags (which come later)
/// take precedence.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut injected = Vec::new();
    let mut it = args.into_iter();
    let bin = it.next();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        let path = if s == "--config" {
            match it.next() {
                Some(p) => PathBuf::from(p),
                None => return Err("--config needs a file argument".into()),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            PathBuf::from(p)
        } else {
            rest.push(a);
            continue;
        };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), i + 1))?;
            injected.push(OsString::from(format!("--{}", k.trim().replace('_', "-"))));
            injected.push(OsString::from(v.trim()));
        }
    }
    let mut out: Vec<OsString> = bin.into_iter().collect();
    // rest[0] is the subcommand when present
    let mut rest = rest.into_iter();
    out.extend(rest.next());
    out.extend(injected);
    out.extend(rest);
    Ok(out)
}
