#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtsr::losses::{
    distill_loss, l1_loss, l2_loss, laplacian_loss, ms_ssim_loss, perceptual_loss, ssim_loss, DistillConfig, LossValue,
    MsSsimConfig,
};
use rtsr::model::{backward, build_model, forward, ModelConfig, ModelWeights};
use rtsr::tensor::{conv2d, conv2d_grads, pixel_shuffle, pixel_unshuffle, relu, relu_grad, ConvSpec, Shape, Tensor};

pub mod oracle;

pub const FD_TOL: f64 = 1e-2;
/// Denominator floor for the relative error.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Shape, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi)).unwrap()
}

/// Values in `±[margin, 1]`, keeping ReLU away from its kink.
pub fn signed_away_from_zero(rng: &mut ChaCha8Rng, shape: Shape, margin: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = rng.gen_range(margin..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .unwrap()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// `x + h·d` in f32; also returns the realised step `(x + h·d) − x` per element.
fn step(x: &[f32], d: &[f32], h: f64) -> (Vec<f32>, Vec<f64>) {
    let moved: Vec<f32> = x
        .iter()
        .zip(d)
        .map(|(&a, &b)| (a as f64 + h * b as f64) as f32)
        .collect();
    let delta = moved.iter().zip(x).map(|(&m, &a)| m as f64 - a as f64).collect();
    (moved, delta)
}

/// Central difference of `f` along `d` at `x` compared with `<grad, d>`.
/// The analytic side uses the realised f32 steps so rounding of the
/// perturbed point does not bias the comparison.
pub fn directional(f: &dyn Fn(&[f32]) -> f64, x: &[f32], grad: &[f32], d: &[f32], h: f64) -> (f64, f64) {
    let (plus, dp) = step(x, d, h);
    let (minus, dm) = step(x, d, -h);
    let fd = f(&plus) - f(&minus);
    let an: f64 = grad
        .iter()
        .zip(dp.iter().zip(&dm))
        .map(|(&g, (&a, &b))| g as f64 * (a - b))
        .sum();
    (fd, an)
}

#[derive(Debug, Clone, Copy)]
pub struct Check {
    pub fd: f64,
    pub analytic: f64,
}

impl Check {
    pub fn err(&self) -> f64 {
        rel_err(self.fd, self.analytic)
    }
}

fn tensor_like(t: &Tensor, data: &[f32]) -> Tensor {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

/// Step sizes tried in order. A central difference straddling a kink
/// (ReLU, |.|) or drowned in f32 rounding is wrong at one h but not at
/// all of them, while a wrong analytic gradient disagrees at every h.
pub const H_LADDER: [f64; 5] = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];

/// First check within `FD_TOL` along the ladder, else the closest one.
pub fn best_of(f: impl Fn(f64) -> Check) -> Check {
    let mut best: Option<Check> = None;
    for h in H_LADDER {
        let c = f(h);
        if c.err() <= FD_TOL {
            return c;
        }
        if best.is_none_or(|b| c.err() < b.err()) {
            best = Some(c);
        }
    }
    best.unwrap()
}

fn check_loss(x: &Tensor, lv: &LossValue, d: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Check {
    let g = |v: &[f32]| f(&tensor_like(x, v));
    best_of(|h| {
        let (fd, analytic) = directional(&g, x.data(), lv.grad.data(), d.data(), h);
        Check { fd, analytic }
    })
}

fn images(seed: u64, h: usize, w: usize) -> (ChaCha8Rng, Tensor, Tensor, Tensor) {
    let mut r = rng(seed);
    let x = uniform(&mut r, Shape::new(2, 1, h, w), 0.05, 0.95);
    let y = uniform(&mut r, Shape::new(2, 1, h, w), 0.05, 0.95);
    let d = uniform(&mut r, Shape::new(2, 1, h, w), -1.0, 1.0);
    (r, x, y, d)
}

pub fn check_l1(seed: u64) -> Check {
    let mut r = rng(seed);
    let s = Shape::new(2, 1, 9, 7);
    let y = uniform(&mut r, s, 0.2, 0.8);
    // |x - y| >= 0.05 so the step never crosses the kink
    let x = Tensor::from_fn(s, |n, c, i, j| {
        let off = r.gen_range(0.05f32..0.2);
        y.at(n, c, i, j) + if r.gen_bool(0.5) { off } else { -off }
    })
    .unwrap();
    let d = uniform(&mut r, s, -1.0, 1.0);
    let lv = l1_loss(&x, &y).unwrap();
    check_loss(&x, &lv, &d, &|t| l1_loss(t, &y).unwrap().value)
}

pub fn check_l2(seed: u64) -> Check {
    let (_, x, y, d) = images(seed, 9, 7);
    let lv = l2_loss(&x, &y).unwrap();
    check_loss(&x, &lv, &d, &|t| l2_loss(t, &y).unwrap().value)
}

pub fn check_ssim(seed: u64) -> Check {
    let (_, x, y, d) = images(seed, 16, 14);
    let lv = ssim_loss(&x, &y).unwrap();
    check_loss(&x, &lv, &d, &|t| ssim_loss(t, &y).unwrap().value)
}

/// Alternates between a three-scale and a full five-scale configuration.
pub fn check_ms_ssim(seed: u64) -> Check {
    let side = if seed.is_multiple_of(2) { 48 } else { 176 };
    let (_, x, y0, d) = images(seed, side, side);
    // correlated target keeps every contrast-structure term above the floor
    let y = x.zip_with(&y0, |a, b| 0.7 * a + 0.3 * b).unwrap();
    let cfg = MsSsimConfig::fitting(side, side).unwrap();
    let lv = ms_ssim_loss(&x, &y, &cfg).unwrap();
    check_loss(&x, &lv, &d, &|t| ms_ssim_loss(t, &y, &cfg).unwrap().value)
}

pub fn check_perceptual(seed: u64) -> Check {
    let (mut r, x, y0, d) = images(seed, 48, 48);
    let y = x.zip_with(&y0, |a, b| 0.6 * a + 0.4 * b).unwrap();
    // nudge away from the L1 kink
    let nudge = Tensor::from_fn(y.shape(), |_, _, _, _| if r.gen_bool(0.5) { 0.03 } else { -0.03 }).unwrap();
    let y = y.add(&nudge).unwrap();
    let lv = perceptual_loss(&x, &y).unwrap();
    check_loss(&x, &lv, &d, &|t| perceptual_loss(t, &y).unwrap().value)
}

pub fn check_laplacian(seed: u64) -> Check {
    let (_, x, y, d) = images(seed, 48, 40);
    let lv = laplacian_loss(&x, &y).unwrap();
    check_loss(&x, &lv, &d, &|t| laplacian_loss(t, &y).unwrap().value)
}

pub fn check_distill(seed: u64) -> Check {
    let (mut r, x, gt, d) = images(seed, 48, 48);
    let t1 = uniform(&mut r, x.shape(), 0.0, 1.0);
    let t2 = uniform(&mut r, x.shape(), 0.0, 1.0);
    let cfg = DistillConfig::default();
    let lv = distill_loss(&x, &gt, &[&t1, &t2], &cfg).unwrap();
    check_loss(&x, &lv, &d, &|t| distill_loss(t, &gt, &[&t1, &t2], &cfg).unwrap().value)
}

/// Conv gradient checks w.r.t. input, weights and bias.
pub fn check_conv(seed: u64) -> [Check; 3] {
    let mut r = rng(seed);
    let (ci, co) = (r.gen_range(1..4), r.gen_range(1..4));
    let (kh, kw) = ([1, 3, 5][r.gen_range(0..3)], [1, 3][r.gen_range(0..2)]);
    let spec = ConvSpec::new(ci, co, kh, kw).unwrap();
    let x = uniform(&mut r, Shape::new(2, ci, 6, 5), -1.0, 1.0);
    let w = uniform(&mut r, spec.weight_shape(), -1.0, 1.0);
    let b: Vec<f32> = (0..co).map(|_| r.gen_range(-1.0..1.0)).collect();
    let up = uniform(&mut r, Shape::new(2, co, 6, 5), -1.0, 1.0);
    let g = conv2d_grads(&x, &w, &up, &spec).unwrap();
    let obj = |x: &Tensor, w: &Tensor, b: &[f32]| dot(conv2d(x, w, b, &spec).unwrap().data(), up.data());
    let dx = uniform(&mut r, x.shape(), -1.0, 1.0);
    let dw = uniform(&mut r, w.shape(), -1.0, 1.0);
    let db: Vec<f32> = (0..co).map(|_| r.gen_range(-1.0..1.0)).collect();
    let h = 1e-2;
    let (fd, analytic) = directional(
        &|v| obj(&tensor_like(&x, v), &w, &b),
        x.data(),
        g.input.data(),
        dx.data(),
        h,
    );
    let cx = Check { fd, analytic };
    let (fd, analytic) = directional(
        &|v| obj(&x, &tensor_like(&w, v), &b),
        w.data(),
        g.weights.data(),
        dw.data(),
        h,
    );
    let cw = Check { fd, analytic };
    let (fd, analytic) = directional(&|v| obj(&x, &w, v), &b, &g.bias, &db, h);
    let cb = Check { fd, analytic };
    [cx, cw, cb]
}

pub fn check_relu(seed: u64) -> Check {
    let mut r = rng(seed);
    let s = Shape::new(2, 3, 5, 4);
    let x = signed_away_from_zero(&mut r, s, 0.05);
    let up = uniform(&mut r, s, -1.0, 1.0);
    let d = uniform(&mut r, s, -1.0, 1.0);
    let g = relu_grad(&x, &up).unwrap();
    let (fd, analytic) = directional(
        &|v| dot(relu(&tensor_like(&x, v)).data(), up.data()),
        x.data(),
        g.data(),
        d.data(),
        1e-2,
    );
    Check { fd, analytic }
}

/// Shuffle and unshuffle are permutations; each one's adjoint is the other.
pub fn check_shuffles(seed: u64) -> [Check; 2] {
    let mut r = rng(seed);
    let f = r.gen_range(2..5);
    let c = r.gen_range(1..3);
    let low = Shape::new(2, c * f * f, 3, 4);
    let high = Shape::new(2, c, 3 * f, 4 * f);
    let x = uniform(&mut r, low, -1.0, 1.0);
    let up = uniform(&mut r, high, -1.0, 1.0);
    let d = uniform(&mut r, low, -1.0, 1.0);
    let g = pixel_unshuffle(&up, f).unwrap();
    let (fd, analytic) = directional(
        &|v| dot(pixel_shuffle(&tensor_like(&x, v), f).unwrap().data(), up.data()),
        x.data(),
        g.data(),
        d.data(),
        1e-2,
    );
    let cs = Check { fd, analytic };
    let y = uniform(&mut r, high, -1.0, 1.0);
    let up2 = uniform(&mut r, low, -1.0, 1.0);
    let d2 = uniform(&mut r, high, -1.0, 1.0);
    let g2 = pixel_shuffle(&up2, f).unwrap();
    let (fd, analytic) = directional(
        &|v| dot(pixel_unshuffle(&tensor_like(&y, v), f).unwrap().data(), up2.data()),
        y.data(),
        g2.data(),
        d2.data(),
        1e-2,
    );
    [cs, Check { fd, analytic }]
}

fn flat(w: &ModelWeights) -> Vec<f32> {
    w.param_slices().concat()
}

fn unflat(like: &ModelWeights, v: &[f32]) -> ModelWeights {
    let mut out = like.clone();
    let mut at = 0;
    for s in out.param_slices_mut() {
        s.copy_from_slice(&v[at..at + s.len()]);
        at += s.len();
    }
    out
}

/// Whole-network parameter gradient for a ×3, one-block, four-channel model.
pub fn check_model(seed: u64) -> Check {
    best_of(|h| check_model_h(seed, h))
}

pub fn check_model_h(seed: u64, h: f64) -> Check {
    let mut r = rng(seed);
    let cfg = ModelConfig::new(3, 1, 4).unwrap();
    let mut w = build_model(cfg, seed).unwrap();
    // non-zero biases so every code path carries signal
    for l in &mut w.layers {
        for b in &mut l.bias {
            *b = r.gen_range(-0.1..0.1);
        }
    }
    let x = uniform(&mut r, Shape::new(2, 3, 6, 8), 0.0, 1.0);
    let out_shape = forward(&w, &x).unwrap().shape();
    let up = uniform(&mut r, out_shape, -1.0, 1.0);
    let g = backward(&w, &x, &up).unwrap();
    let theta = flat(&w);
    let d: Vec<f32> = theta.iter().map(|_| r.gen_range(-1.0..1.0)).collect();
    let (fd, analytic) = directional(
        &|v| dot(forward(&unflat(&w, v), &x).unwrap().data(), up.data()),
        &theta,
        &flat(&g),
        &d,
        h,
    );
    Check { fd, analytic }
}
