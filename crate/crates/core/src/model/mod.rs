//! The super-resolution network.
//!
//! Layer stack for scale `s`, `B` blocks and `C` channels:
//!
//! ```text
//! input 3×H×W (YCbCr 4:4:4, [0,1])
//!   pixel_unshuffle(2)              → 12 × H/2 × W/2
//!   head   conv 12→C
//!   B ×  { conv C→C, ReLU, conv C→C } + skip
//!   up1    conv C→4C, pixel_shuffle(2) → C × H × W
//!   up2    conv C→s², pixel_shuffle(s) → 1 × sH × sW   (luma)
//! ```
//!
//! All convolutions are 3×3 with same-size zero padding.

mod complexity;
mod weights_file;

pub use complexity::{count_macs, count_params, ComplexityReport, LayerCost};
pub use weights_file::{load_weights, read_weights, save_weights, write_weights, WeightFileError, WEIGHT_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{
    conv2d, conv2d_input_grad, conv2d_param_grads, pixel_shuffle, pixel_unshuffle, relu, relu_grad, ConvSpec, Shape,
    Tensor, TensorError,
};

/// Input channels of the network (Y, Cb, Cr).
pub const INPUT_CHANNELS: usize = 3;
/// Space-to-depth factor applied before the first convolution.
pub const UNSHUFFLE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unsupported scale factor {0} (expected 3 or 4)")]
    UnsupportedScale(u32),
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error("network input must have {expected} channels, found {found}")]
    InputChannels { expected: usize, found: usize },
    #[error("input spatial size {h}x{w} must be divisible by {UNSHUFFLE}")]
    OddSpatial { h: usize, w: usize },
    #[error("weights were built for {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub scale: u32,
    pub blocks: usize,
    pub channels: usize,
}

impl ModelConfig {
    pub const DEFAULT_BLOCKS: usize = 3;
    pub const DEFAULT_CHANNELS: usize = 24;

    pub fn new(scale: u32, blocks: usize, channels: usize) -> Result<Self> {
        let cfg = ModelConfig {
            scale,
            blocks,
            channels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The shipped configuration for `scale` (B = 3, C = 24).
    pub fn shipped(scale: u32) -> Result<Self> {
        Self::new(scale, Self::DEFAULT_BLOCKS, Self::DEFAULT_CHANNELS)
    }

    pub fn validate(&self) -> Result<()> {
        self.check_scale()?;
        if self.blocks == 0 {
            return Err(ModelError::InvalidConfig("blocks must be at least 1"));
        }
        if self.channels == 0 {
            return Err(ModelError::InvalidConfig("channels must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn check_scale(&self) -> Result<()> {
        match self.scale {
            3 | 4 => Ok(()),
            s => Err(ModelError::UnsupportedScale(s)),
        }
    }

    pub fn scale_usize(&self) -> usize {
        self.scale as usize
    }

    /// Convolution layers in execution order.
    pub fn layer_plan(&self) -> Vec<LayerPlan> {
        let c = self.channels;
        let s = self.scale_usize();
        let mut plan = Vec::with_capacity(2 * self.blocks + 3);
        plan.push(LayerPlan::new(
            "head",
            ConvSpec::k3(INPUT_CHANNELS * UNSHUFFLE * UNSHUFFLE, c),
            Grid::Low,
        ));
        for b in 0..self.blocks {
            plan.push(LayerPlan::new(format!("block{b}.conv1"), ConvSpec::k3(c, c), Grid::Low));
            plan.push(LayerPlan::new(format!("block{b}.conv2"), ConvSpec::k3(c, c), Grid::Low));
        }
        plan.push(LayerPlan::new("up1", ConvSpec::k3(c, 4 * c), Grid::Low));
        plan.push(LayerPlan::new("up2", ConvSpec::k3(c, s * s), Grid::Input));
        plan
    }
}

impl std::fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{} B={} C={}", self.scale, self.blocks, self.channels)
    }
}

/// Spatial grid a layer runs on, relative to the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// After the 2× space-to-depth: H/2 × W/2.
    Low,
    /// Back at input resolution after the first shuffle.
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub name: String,
    pub spec: ConvSpec,
    pub grid: Grid,
}

impl LayerPlan {
    fn new(name: impl Into<String>, spec: ConvSpec, grid: Grid) -> Self {
        LayerPlan {
            name: name.into(),
            spec,
            grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn zeros(plan: &LayerPlan) -> Self {
        ConvLayer {
            name: plan.name.clone(),
            spec: plan.spec,
            weight: Tensor::zeros(plan.spec.weight_shape()).expect("non-empty conv spec"),
            bias: vec![0.0; plan.spec.out_channels],
        }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(conv2d(x, &self.weight, &self.bias, &self.spec)?)
    }
}

/// Every learned parameter of the network, in layer order. Gradients use the
/// same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub layers: Vec<ConvLayer>,
}

impl ModelWeights {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelWeights {
            config,
            layers: config.layer_plan().iter().map(ConvLayer::zeros).collect(),
        })
    }

    /// Number of named tensors (a weight and a bias per conv).
    pub fn tensor_count(&self) -> usize {
        2 * self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `(name, dims, values)` for every tensor, weight before bias.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out = Vec::with_capacity(self.tensor_count());
        for l in &self.layers {
            let s = l.weight.shape();
            out.push((format!("{}.weight", l.name), vec![s.n, s.c, s.h, s.w], l.weight.data()));
            out.push((format!("{}.bias", l.name), vec![l.bias.len()], l.bias.as_slice()));
        }
        out
    }

    /// Mutable flat views over every parameter slice, in `named_tensors` order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = Vec::with_capacity(self.tensor_count());
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f32]> {
        self.named_tensors().into_iter().map(|(_, _, v)| v).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_layout(&self, other: &ModelWeights) -> Result<()> {
        if self.config != other.config {
            return Err(ModelError::LayoutMismatch {
                expected: self.config.to_string(),
                found: other.config.to_string(),
            });
        }
        Ok(())
    }

    /// `self += k · other`, used for gradient accumulation.
    pub fn axpy(&mut self, k: f32, other: &ModelWeights) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
        Ok(())
    }

    fn head(&self) -> &ConvLayer {
        &self.layers[0]
    }

    fn block(&self, b: usize) -> (&ConvLayer, &ConvLayer) {
        (&self.layers[1 + 2 * b], &self.layers[2 + 2 * b])
    }

    fn up1(&self) -> &ConvLayer {
        &self.layers[self.layers.len() - 2]
    }

    fn up2(&self) -> &ConvLayer {
        &self.layers[self.layers.len() - 1]
    }
}

/// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases, fully
/// determined by `seed`.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<ModelWeights> {
    let mut weights = ModelWeights::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut weights.layers {
        let fan_in = (layer.spec.in_channels * layer.spec.kernel_h * layer.spec.kernel_w) as f32;
        let bound = (6.0 / fan_in).sqrt();
        for v in layer.weight.data_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }
    Ok(weights)
}

fn check_input(input: &Tensor) -> Result<()> {
    let s = input.shape();
    if s.c != INPUT_CHANNELS {
        return Err(ModelError::InputChannels {
            expected: INPUT_CHANNELS,
            found: s.c,
        });
    }
    if !s.h.is_multiple_of(UNSHUFFLE) || !s.w.is_multiple_of(UNSHUFFLE) {
        return Err(ModelError::OddSpatial { h: s.h, w: s.w });
    }
    Ok(())
}

/// Activations kept by [`forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    unshuffled: Tensor,
    /// Per block: input, conv1 pre-activation, ReLU output.
    blocks: Vec<(Tensor, Tensor, Tensor)>,
    body_out: Tensor,
    shuffled: Tensor,
}

fn forward_impl(weights: &ModelWeights, input: &Tensor, cache: Option<&mut ForwardCache>) -> Result<Tensor> {
    check_input(input)?;
    let unshuffled = pixel_unshuffle(input, UNSHUFFLE)?;
    let mut a = weights.head().apply(&unshuffled)?;
    let mut blocks = Vec::new();
    for b in 0..weights.config.blocks {
        let (c1, c2) = weights.block(b);
        let t = c1.apply(&a)?;
        let r = relu(&t);
        let mut next = c2.apply(&r)?;
        next.add_assign(&a)?;
        if cache.is_some() {
            blocks.push((a, t, r));
        }
        a = next;
    }
    let shuffled = pixel_shuffle(&weights.up1().apply(&a)?, UNSHUFFLE)?;
    let out = pixel_shuffle(&weights.up2().apply(&shuffled)?, weights.config.scale_usize())?;
    if let Some(c) = cache {
        *c = ForwardCache {
            unshuffled,
            blocks,
            body_out: a,
            shuffled,
        };
    }
    Ok(out)
}

/// Luma prediction `n×1×sH×sW` for an `n×3×H×W` input. Unclamped.
///
/// Batch items are evaluated one at a time, so memory stays bounded and the
/// result for a frame does not depend on what it was batched with.
pub fn forward(weights: &ModelWeights, input: &Tensor) -> Result<Tensor> {
    check_input(input)?;
    let n = input.shape().n;
    if n == 1 {
        return forward_impl(weights, input, None);
    }
    let outs = (0..n)
        .map(|i| forward_impl(weights, &input.batch_item(i), None))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&outs)?)
}

/// Forward pass over the whole batch, keeping activations for [`backward_cached`].
pub fn forward_cached(weights: &ModelWeights, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let mut cache = ForwardCache {
        unshuffled: Tensor::zeros(Shape::new(1, 1, 1, 1))?,
        blocks: Vec::new(),
        body_out: Tensor::zeros(Shape::new(1, 1, 1, 1))?,
        shuffled: Tensor::zeros(Shape::new(1, 1, 1, 1))?,
    };
    let out = forward_impl(weights, input, Some(&mut cache))?;
    Ok((out, cache))
}

/// Gradients of a scalar loss w.r.t. every parameter, given the loss gradient
/// at the network output.
pub fn backward(weights: &ModelWeights, input: &Tensor, upstream: &Tensor) -> Result<ModelWeights> {
    let (_, cache) = forward_cached(weights, input)?;
    backward_cached(weights, &cache, upstream)
}

pub fn backward_cached(weights: &ModelWeights, cache: &ForwardCache, upstream: &Tensor) -> Result<ModelWeights> {
    let mut grads = ModelWeights::zeros(weights.config)?;
    let nl = grads.layers.len();
    let s = weights.config.scale_usize();

    let g_up2 = pixel_unshuffle(upstream, s)?;
    set_param_grads(&mut grads.layers[nl - 1], &cache.shuffled, weights.up2(), &g_up2)?;
    let g_shuffled = conv2d_input_grad(
        &weights.up2().weight,
        &g_up2,
        &weights.up2().spec,
        cache.shuffled.shape(),
    )?;

    let g_up1 = pixel_unshuffle(&g_shuffled, UNSHUFFLE)?;
    set_param_grads(&mut grads.layers[nl - 2], &cache.body_out, weights.up1(), &g_up1)?;
    let mut ga = conv2d_input_grad(
        &weights.up1().weight,
        &g_up1,
        &weights.up1().spec,
        cache.body_out.shape(),
    )?;

    for b in (0..weights.config.blocks).rev() {
        let (c1, c2) = weights.block(b);
        let (a_in, t, r) = &cache.blocks[b];
        set_param_grads(&mut grads.layers[2 + 2 * b], r, c2, &ga)?;
        let gr = conv2d_input_grad(&c2.weight, &ga, &c2.spec, r.shape())?;
        let gt = relu_grad(t, &gr)?;
        set_param_grads(&mut grads.layers[1 + 2 * b], a_in, c1, &gt)?;
        // skip path plus conv path
        ga.add_assign(&conv2d_input_grad(&c1.weight, &gt, &c1.spec, a_in.shape())?)?;
    }

    set_param_grads(&mut grads.layers[0], &cache.unshuffled, weights.head(), &ga)?;
    Ok(grads)
}

fn set_param_grads(slot: &mut ConvLayer, input: &Tensor, layer: &ConvLayer, upstream: &Tensor) -> Result<()> {
    let (gw, gb) = conv2d_param_grads(input, &layer.weight, upstream, &layer.spec)?;
    slot.weight = gw;
    slot.bias = gb;
    Ok(())
}
