//! Procedural textures that can be evaluated at any real coordinate.

use std::f32::consts::PI;

use rand::Rng;

pub type Rgb = [f32; 3];

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    Solid,
    /// Checkerboard with edges smoothed over roughly `softness` pixels.
    Checker {
        period: f32,
        softness: f32,
    },
    /// `0.5 + 0.5·sin(2π(kx·x + ky·y) + phase)`.
    Grating {
        kx: f32,
        ky: f32,
        phase: f32,
    },
    /// Value noise on a square lattice with quintic interpolation.
    Noise {
        cell: f32,
        seed: u32,
    },
}

impl Pattern {
    /// Scalar pattern value in [0, 1].
    pub fn value(&self, x: f32, y: f32) -> f32 {
        match *self {
            Pattern::Solid => 0.0,
            Pattern::Checker { period, softness } => {
                let k = period / (PI * softness.max(1e-3));
                let sx = ((PI * x / period).sin() * k).clamp(-1.0, 1.0);
                let sy = ((PI * y / period).sin() * k).clamp(-1.0, 1.0);
                0.5 + 0.5 * sx * sy
            }
            Pattern::Grating { kx, ky, phase } => {
                0.5 + 0.5 * (2.0 * PI * (kx * x + ky * y) + phase).sin()
            }
            Pattern::Noise { cell, seed } => value_noise(x / cell, y / cell, seed),
        }
    }
}

fn lattice(ix: i32, iy: i32, seed: u32) -> f32 {
    let mut h = (ix as u32).wrapping_mul(0x8da6_b343)
        ^ (iy as u32).wrapping_mul(0xd816_3841)
        ^ seed.wrapping_mul(0xcb1a_b31f);
    h ^= h >> 16;
    h = h.wrapping_mul(0x7feb_352d);
    h ^= h >> 15;
    h = h.wrapping_mul(0x846c_a68b);
    h ^= h >> 16;
    (h >> 8) as f32 / (1u32 << 24) as f32
}

fn quintic(t: f32) -> f32 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(x: f32, y: f32, seed: u32) -> f32 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i32, fy as i32);
    let (u, v) = (quintic(x - fx), quintic(y - fy));
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + u * (b - a);
    let bottom = c + u * (d - c);
    top + v * (bottom - top)
}

/// One pattern mapped between two colors and mixed over the layers below.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub pattern: Pattern,
    pub low: Rgb,
    pub high: Rgb,
    pub weight: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub layers: Vec<Layer>,
}

impl Texture {
    pub fn solid(color: Rgb) -> Self {
        Texture {
            layers: vec![Layer {
                pattern: Pattern::Solid,
                low: color,
                high: color,
                weight: 1.0,
            }],
        }
    }

    pub fn eval(&self, x: f32, y: f32) -> Rgb {
        let mut out = [0.0f32; 3];
        for layer in &self.layers {
            let t = layer.pattern.value(x, y);
            for c in 0..3 {
                let v = layer.low[c] + t * (layer.high[c] - layer.low[c]);
                out[c] += layer.weight * (v - out[c]);
            }
        }
        out
    }

    /// Mean of an `n × n` grid of samples over a `width`-wide square.
    pub fn eval_box(&self, x: f32, y: f32, width: f32, n: usize) -> Rgb {
        if width <= 0.0 || n <= 1 {
            return self.eval(x, y);
        }
        let mut acc = [0.0f32; 3];
        for j in 0..n {
            let oy = ((j as f32 + 0.5) / n as f32 - 0.5) * width;
            for i in 0..n {
                let ox = ((i as f32 + 0.5) / n as f32 - 0.5) * width;
                let v = self.eval(x + ox, y + oy);
                for c in 0..3 {
                    acc[c] += v[c];
                }
            }
        }
        let k = 1.0 / (n * n) as f32;
        acc.map(|v| v * k)
    }

    /// Randomized layered texture. `min_period` bounds the finest detail in
    /// pixels.
    pub fn random(rng: &mut impl Rng, min_period: f32) -> Self {
        let mut layers = vec![Layer {
            pattern: random_pattern(rng, min_period),
            low: random_color(rng),
            high: random_color(rng),
            weight: 1.0,
        }];
        for _ in 0..rng.gen_range(1..=2) {
            layers.push(Layer {
                pattern: random_pattern(rng, min_period),
                low: random_color(rng),
                high: random_color(rng),
                weight: rng.gen_range(0.25..0.6),
            });
        }
        Texture { layers }
    }
}

pub fn random_color(rng: &mut impl Rng) -> Rgb {
    [
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
    ]
}

fn random_pattern(rng: &mut impl Rng, min_period: f32) -> Pattern {
    match rng.gen_range(0..3) {
        0 => Pattern::Checker {
            period: rng.gen_range(min_period.max(3.0)..24.0),
            softness: rng.gen_range(0.5..1.5),
        },
        1 => {
            let period = rng.gen_range(min_period..16.0);
            let angle = rng.gen_range(0.0..PI);
            Pattern::Grating {
                kx: angle.cos() / period,
                ky: angle.sin() / period,
                phase: rng.gen_range(0.0..2.0 * PI),
            }
        }
        _ => Pattern::Noise {
            cell: rng.gen_range(min_period.max(2.0)..12.0),
            seed: rng.gen(),
        },
    }
}
