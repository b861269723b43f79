//! Synthetic test sequences: moving gradients and sinusoids with block-digit
//! text overlays. Deterministic in `seed`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::resample::quantize;
use super::{Frame, Plane, Sampling, SequenceHeader};

const GLYPHS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

struct TextLine {
    digits: Vec<u8>,
    x: f64,
    y: f64,
    speed: f64,
    cell: usize,
}

impl TextLine {
    /// `Some(true)` on a glyph stroke, `Some(false)` on the line's backing box.
    fn hit(&self, px: usize, py: usize, t: usize) -> Option<bool> {
        let cell = self.cell as f64;
        let ox = self.x + self.speed * t as f64;
        let lx = (px as f64 - ox) / cell;
        let ly = (py as f64 - self.y) / cell;
        let advance = 4.0;
        if lx < -1.0 || !(-1.0..6.0).contains(&ly) || lx >= advance * self.digits.len() as f64 {
            return None;
        }
        if lx < 0.0 || !(0.0..5.0).contains(&ly) {
            return Some(false);
        }
        let (gi, gx) = ((lx / advance) as usize, (lx % advance) as usize);
        if gx >= 3 {
            return Some(false);
        }
        let row = GLYPHS[self.digits[gi] as usize][ly as usize];
        Some(row & (0b100 >> gx) != 0)
    }
}

/// `frames` 4:2:0 frames of `width × height` (both even) at 30 fps.
pub fn synthetic_sequence(width: usize, height: usize, frames: usize, seed: u64) -> (SequenceHeader, Vec<Frame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let phase: [f64; 4] = [
        rng.gen::<f64>() * TAU,
        rng.gen::<f64>() * TAU,
        rng.gen::<f64>() * TAU,
        rng.gen::<f64>() * TAU,
    ];
    let period_x = w / rng.gen_range(5.0..9.0);
    let period_y = h / rng.gen_range(3.0..6.0);
    let stripe = rng.gen_range(9.0..15.0);
    let cell = (height / 120).max(1);
    let lines: Vec<TextLine> = (0..4)
        .map(|i| TextLine {
            digits: (0..rng.gen_range(4..9)).map(|_| rng.gen_range(0..10)).collect(),
            x: rng.gen_range(0.0..w * 0.6),
            y: h * (0.1 + 0.2 * i as f64) + rng.gen_range(0.0..h * 0.05),
            speed: rng.gen_range(-4.0..4.0) * cell as f64 / 3.0,
            cell: cell * (1 + i % 2),
        })
        .collect();
    let stripe_box = (w * 0.55, h * 0.55, w * 0.9, h * 0.9);

    let luma = |x: usize, y: usize, t: usize| -> f64 {
        for l in &lines {
            if let Some(stroke) = l.hit(x, y, t) {
                return if stroke { 228.0 } else { 28.0 };
            }
        }
        let (xf, yf, tf) = (x as f64, y as f64, t as f64);
        let mut v = 50.0 + 110.0 * (xf + yf) / (w + h);
        v += 35.0
            * (TAU * (xf - 3.0 * tf) / period_x + phase[0]).sin()
            * (TAU * (yf + 2.0 * tf) / period_y + phase[1]).sin();
        let (x0, y0, x1, y1) = stripe_box;
        if xf >= x0 && xf < x1 && yf >= y0 && yf < y1 {
            v += 30.0 * (TAU * (xf + yf + 2.0 * tf) / stripe).sin();
        }
        v
    };

    let (cw, ch) = Sampling::C420.chroma_dims(width, height);
    let out = (0..frames)
        .map(|t| {
            let y = Plane {
                width,
                height,
                data: (0..height)
                    .flat_map(|yy| (0..width).map(move |xx| (xx, yy)))
                    .map(|(xx, yy)| quantize(luma(xx, yy, t)))
                    .collect(),
            };
            let chroma = |k: usize| Plane {
                width: cw,
                height: ch,
                data: (0..ch)
                    .flat_map(|yy| (0..cw).map(move |xx| (xx, yy)))
                    .map(|(xx, yy)| {
                        let (u, v) = ((xx as f64 + 0.5) / cw as f64, (yy as f64 + 0.5) / ch as f64);
                        let tf = t as f64 * 0.05;
                        quantize(128.0 + 45.0 * (TAU * (u + k as f64 * v) + phase[2 + k] + tf).sin())
                    })
                    .collect(),
            };
            Frame::new(Sampling::C420, y, chroma(0), chroma(1)).expect("even dimensions")
        })
        .collect();
    (SequenceHeader::new(width, height, 30, 1, Sampling::C420), out)
}
