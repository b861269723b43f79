use serde::Serialize;

use super::{Grid, ModelConfig, Result, UNSHUFFLE};

/// Cost of one convolution. Shuffles and ReLU are free.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub config: ModelConfig,
    pub input_h: usize,
    pub input_w: usize,
    pub output_h: usize,
    pub output_w: usize,
    pub params_total: usize,
    pub macs_total_per_frame: u64,
    pub macs_per_output_pixel: f64,
    pub layers: Vec<LayerCost>,
}

impl ComplexityReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<14} {:>5} {:>5} {:>7} {:>11} {:>8} {:>14}\n",
            "layer", "in", "out", "kernel", "grid", "params", "MACs"
        );
        for l in &self.layers {
            s.push_str(&format!(
                "{:<14} {:>5} {:>5} {:>7} {:>11} {:>8} {:>14}\n",
                l.name,
                l.in_channels,
                l.out_channels,
                format!("{}x{}", l.kernel.0, l.kernel.1),
                format!("{}x{}", l.out_w, l.out_h),
                l.params,
                l.macs
            ));
        }
        s.push_str(&format!(
            "total params {} ({:.4} M)\nMACs/frame {} for {}x{} -> {}x{}\nMACs/pixel {:.1} ({:.3} K)\n",
            self.params_total,
            self.params_total as f64 / 1e6,
            self.macs_total_per_frame,
            self.input_w,
            self.input_h,
            self.output_w,
            self.output_h,
            self.macs_per_output_pixel,
            self.macs_per_output_pixel / 1e3
        ));
        s
    }
}

/// `Σ (outC·inC·kh·kw + outC)` over all convolutions. Accepts `blocks = 0`.
pub fn count_params(config: &ModelConfig) -> Result<usize> {
    config.check_scale()?;
    Ok(config.layer_plan().iter().map(|l| l.spec.param_count()).sum())
}

/// MAC count for an `in_h × in_w` input (both divisible by 2).
pub fn count_macs(config: &ModelConfig, in_h: usize, in_w: usize) -> Result<ComplexityReport> {
    config.check_scale()?;
    if !in_h.is_multiple_of(UNSHUFFLE) || !in_w.is_multiple_of(UNSHUFFLE) || in_h == 0 || in_w == 0 {
        return Err(super::ModelError::OddSpatial { h: in_h, w: in_w });
    }
    let layers: Vec<LayerCost> = config
        .layer_plan()
        .into_iter()
        .map(|l| {
            let (out_h, out_w) = match l.grid {
                Grid::Low => (in_h / UNSHUFFLE, in_w / UNSHUFFLE),
                Grid::Input => (in_h, in_w),
            };
            let k = (l.spec.kernel_h, l.spec.kernel_w);
            LayerCost {
                name: l.name,
                in_channels: l.spec.in_channels,
                out_channels: l.spec.out_channels,
                kernel: k,
                out_h,
                out_w,
                params: l.spec.param_count(),
                macs: (out_h * out_w) as u64 * l.spec.weight_count() as u64,
            }
        })
        .collect();
    let s = config.scale_usize();
    let (output_h, output_w) = (in_h * s, in_w * s);
    let macs_total: u64 = layers.iter().map(|l| l.macs).sum();
    Ok(ComplexityReport {
        config: *config,
        input_h: in_h,
        input_w: in_w,
        output_h,
        output_w,
        params_total: layers.iter().map(|l| l.params).sum(),
        macs_total_per_frame: macs_total,
        macs_per_output_pixel: macs_total as f64 / (output_h * output_w) as f64,
        layers,
    })
}
