//! Real-time super-resolution for compressed YCbCr 4:2:0 video.
//!
//! * [`tensor`]: rank-4 tensors, convolution and pixel shuffle with gradients
//! * [`model`]: the network, its weight file and complexity accounting
//! * [`losses`]: L1/L2/SSIM/MS-SSIM, the perceptual mix, Laplacian and distillation losses
//! * [`train`]: Adam, the learning-rate schedule, patch datasets and the two training stages
//! * [`video`]: y4m I/O, chroma conversion, resamplers and the upscaling pipeline
//! * [`metrics`]: PSNR/SSIM/MS-SSIM on luma and sequence evaluation

pub mod losses;
pub mod metrics;
pub mod model;
mod sep;
pub mod tensor;
pub mod train;
pub mod video;

pub use model::{ModelConfig, ModelWeights};
pub use tensor::{Shape, Tensor};
