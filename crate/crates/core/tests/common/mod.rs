//! Brute-force reference implementations shared by the integration tests and
//! the acceptance runner. Each one is written directly from the definition,
//! pixel by pixel, without reusing library code paths.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jitterscale::raster::{ConvKernel, DenseLayer, Raster};
use jitterscale::synth::{random_scene, DatasetConfig, SceneSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raster(rng: &mut impl Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Raster {
    Raster::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
}

pub fn random_raster64(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Raster<f64> {
    Raster::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

/// Zero-padded 3×3 cross-correlation, one output value at a time.
pub fn conv3x3_oracle(input: &Raster, kernel: &ConvKernel) -> Vec<f64> {
    let (c_in, h, w) = input.shape();
    let mut out = Vec::new();
    for o in 0..kernel.out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = kernel.bias[o] as f64;
                for c in 0..c_in {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let sy = y as isize + dy as isize - 1;
                            let sx = x as isize + dx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += kernel.tap(o, c, dy, dx) as f64
                                * input.get(c, sy as usize, sx as usize) as f64;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Explicit matrix-vector products with ReLU between layers.
pub fn dense_oracle(layers: &[DenseLayer], relu: &[bool], input: &[f32]) -> Vec<f64> {
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    for (layer, &r) in layers.iter().zip(relu) {
        let mut y = vec![0.0; layer.out_features];
        for (o, yo) in y.iter_mut().enumerate() {
            let mut acc = layer.bias[o] as f64;
            for (i, xi) in x.iter().enumerate() {
                acc += layer.weights[o * layer.in_features + i] as f64 * xi;
            }
            *yo = if r { acc.max(0.0) } else { acc };
        }
        x = y;
    }
    x
}

/// Bilinear interpolation of clamped coordinates using the four-weight form.
pub fn bilinear_oracle(source: &Raster, positions: &Raster) -> Vec<f64> {
    let (c, h, w) = source.shape();
    let (oh, ow) = (positions.height(), positions.width());
    let mut out = Vec::new();
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let px = (positions.get(0, y, x) as f64).clamp(0.0, (w - 1) as f64);
                let py = (positions.get(1, y, x) as f64).clamp(0.0, (h - 1) as f64);
                let (x0, y0) = (px.floor() as usize, py.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (px - x0 as f64, py - y0 as f64);
                let v = |yy: usize, xx: usize| source.get(ch, yy, xx) as f64;
                out.push(
                    v(y0, x0) * (1.0 - fx) * (1.0 - fy)
                        + v(y0, x1) * fx * (1.0 - fy)
                        + v(y1, x0) * (1.0 - fx) * fy
                        + v(y1, x1) * fx * fy,
                );
            }
        }
    }
    out
}

/// Keys cubic kernel with a = −0.5.
pub fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Direct 2-D kernel sum over every source pixel, with border clamping
/// expressed as repeated edge samples.
pub fn bicubic_oracle(input: &Raster, scale: usize) -> Vec<f64> {
    let (c, h, w) = input.shape();
    let s = scale as f64;
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..h * scale {
            for ox in 0..w * scale {
                let u = (ox as f64 + 0.5) / s - 0.5;
                let v = (oy as f64 + 0.5) / s - 0.5;
                let mut acc = 0.0;
                for j in (v.floor() as isize - 1)..=(v.floor() as isize + 2) {
                    for i in (u.floor() as isize - 1)..=(u.floor() as isize + 2) {
                        let wgt = keys(u - i as f64) * keys(v - j as f64);
                        let sy = j.clamp(0, h as isize - 1) as usize;
                        let sx = i.clamp(0, w as isize - 1) as usize;
                        acc += wgt * input.get(ch, sy, sx) as f64;
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Per-tile scan: collect every LR pixel under the HR tile's pixels, keep
/// the one with lowest depth, smallest row-major LR index on ties.
pub fn dilate_oracle(mv: &Raster, depth: &Raster, scale: usize, block: usize) -> Raster {
    let (h, w) = (depth.height(), depth.width());
    let (hh, hw) = (h * scale, w * scale);
    let mut out = Raster::zeros(2, hh, hw);
    for ty in 0..hh.div_ceil(block) {
        for tx in 0..hw.div_ceil(block) {
            let mut best: Option<(f32, usize)> = None;
            for y in ty * block..((ty + 1) * block).min(hh) {
                for x in tx * block..((tx + 1) * block).min(hw) {
                    let (ly, lx) = (y / scale, x / scale);
                    let d = depth.get(0, ly, lx);
                    let idx = ly * w + lx;
                    best = match best {
                        Some((bd, bi)) if bd < d || (bd == d && bi <= idx) => Some((bd, bi)),
                        _ => Some((d, idx)),
                    };
                }
            }
            let (_, idx) = best.unwrap();
            let (ly, lx) = (idx / w, idx % w);
            for y in ty * block..((ty + 1) * block).min(hh) {
                for x in tx * block..((tx + 1) * block).min(hw) {
                    out.set(0, y, x, mv.get(0, ly, lx) * scale as f32);
                    out.set(1, y, x, mv.get(1, ly, lx) * scale as f32);
                }
            }
        }
    }
    out
}

pub fn psnr_oracle(a: &Raster, b: &Raster) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = *x as f64 - *y as f64;
        sum += d * d;
    }
    let mse = sum / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}

/// SSIM with an explicit 2-D Gaussian weight per window position.
pub fn ssim_oracle(a: &Raster, b: &Raster) -> f64 {
    const N: usize = 11;
    let sigma = 1.5f64;
    let mut g = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (ch, h, w) = a.shape();
    let mut per_channel = 0.0;
    for c in 0..ch {
        let mut acc = 0.0;
        let mut count = 0;
        for y in 0..=h - N {
            for x in 0..=w - N {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..N {
                    for j in 0..N {
                        let wt = g[i][j] / total;
                        let va = a.get(c, y + i, x + j) as f64;
                        let vb = b.get(c, y + i, x + j) as f64;
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        per_channel += acc / count as f64;
    }
    per_channel / ch as f64
}

/// Two-pass population standard deviation per pixel, averaged, times 255.
pub fn pixel_std_oracle(frames: &[Raster]) -> f64 {
    let n = frames.len() as f64;
    let len = frames[0].len();
    let mut total = 0.0;
    for i in 0..len {
        let mean: f64 = frames.iter().map(|f| f.data()[i] as f64).sum::<f64>() / n;
        let var: f64 = frames
            .iter()
            .map(|f| (f.data()[i] as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        total += var.sqrt();
    }
    255.0 * total / len as f64
}

/// Radical inverse of `i` by reversing its base-`b` digit string; returned
/// as an exact fraction.
pub fn digit_reversal(i: u64, b: u64) -> (u64, u64) {
    let digits: Vec<u64> = {
        let mut d = Vec::new();
        let mut n = i;
        while n > 0 {
            d.push(n % b);
            n /= b;
        }
        d
    };
    let mut num = 0;
    for &d in &digits {
        num = num * b + d;
    }
    (num, b.pow(digits.len() as u32))
}

/// Proptest settings without on-disk failure persistence.
pub fn prop_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}

/// RMS of `a − b` over the pixels where `mask` is zero.
pub fn masked_rms(a: &Raster, b: &Raster, mask: &Raster) -> (f64, usize) {
    let (c, h, w) = a.shape();
    let (mut sum, mut n) = (0.0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(0, y, x) != 0.0 {
                continue;
            }
            for ch in 0..c {
                let d = (a.get(ch, y, x) - b.get(ch, y, x)) as f64;
                sum += d * d;
            }
            n += 1;
        }
    }
    ((sum / (n * c) as f64).sqrt(), n)
}

/// First `frames` frames of a 64×64 dataset scene.
pub fn small_scene(index: usize, frames: usize) -> SceneSpec {
    let config = DatasetConfig {
        hr_height: 64,
        hr_width: 64,
        ..DatasetConfig::default()
    };
    let mut spec = random_scene(&config, index);
    spec.frames = frames;
    spec.camera.truncate(frames);
    for s in &mut spec.sprites {
        s.path.truncate(frames);
    }
    spec.static_ranges.retain(|r| r[1] <= frames);
    spec
}
