//! Inputs shared by the criterion benches in `benches/`.

use rtsr::tensor::{Shape, Tensor};
use rtsr::video::synth::synthetic_sequence;
use rtsr::video::{downscale_frame, Frame};

/// Deterministic pseudo-random values in `[0, 1)` (no RNG dependency).
pub fn filled(shape: Shape, salt: u32) -> Tensor {
    Tensor::from_fn(shape, |n, c, y, x| {
        let mut h = (n as u32) ^ (c as u32).wrapping_mul(0x9e37_79b9) ^ salt;
        h = h.wrapping_mul(0x85eb_ca6b) ^ (y as u32).wrapping_mul(0xc2b2_ae35) ^ (x as u32).wrapping_mul(0x27d4_eb2f);
        h ^= h >> 15;
        h = h.wrapping_mul(0x2c1b_3c6d);
        h ^= h >> 12;
        (h >> 8) as f32 / (1u32 << 24) as f32
    })
    .expect("non-empty shape")
}

/// One 640×360 frame, the ×3 input for 1080p output.
pub fn frame_360p() -> Frame {
    let (_, frames) = synthetic_sequence(1920, 1080, 1, 7);
    downscale_frame(&frames[0], 3).expect("1080p divides by 3")
}
