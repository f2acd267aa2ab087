//! Random training clips and train/validation segment splits.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FrameBundle;
use crate::error::{Error, Result};
use crate::warp::{MotionField, DILATION_BLOCK};

/// Shape of the clips drawn by a [`ClipSampler`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClipSpec {
    pub clip_len: usize,
    pub hr_crop: usize,
    pub batch: usize,
    pub scale: usize,
}

impl ClipSpec {
    pub fn lr_crop(&self) -> usize {
        self.hr_crop / self.scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_len == 0 || self.batch == 0 {
            return Err(Error::config("clip_len and batch must be positive"));
        }
        if self.scale == 0 || self.hr_crop % self.scale != 0 || self.hr_crop % DILATION_BLOCK != 0 {
            return Err(Error::config(format!(
                "hr_crop {} must be divisible by scale {} and by {DILATION_BLOCK}",
                self.hr_crop, self.scale
            )));
        }
        Ok(())
    }
}

/// One temporal window with aligned LR/HR crops.
#[derive(Clone, Debug)]
pub struct Clip {
    pub sequence: usize,
    pub start: usize,
    /// (y, x) of the LR crop.
    pub lr_origin: (usize, usize),
    /// (y, x) of the HR crop; always `scale · lr_origin`.
    pub hr_origin: (usize, usize),
    pub frames: Vec<FrameBundle>,
}

#[derive(Clone, Debug)]
pub struct ClipBatch {
    pub spec: ClipSpec,
    pub clips: Vec<Clip>,
}

/// Everything needed to resume a sampler mid-stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerState {
    pub seed: u64,
    pub word_pos: u128,
    pub epoch: u64,
    pub cursor: usize,
}

/// Seeded clip sampler. Sequences are visited in a fresh random order every
/// epoch; window start and crop position come from a single random stream.
#[derive(Clone, Debug)]
pub struct ClipSampler {
    seed: u64,
    rng: ChaCha8Rng,
    epoch: u64,
    cursor: usize,
    order: Vec<usize>,
}

impl ClipSampler {
    pub fn new(seed: u64) -> Self {
        ClipSampler {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
        }
    }

    pub fn state(&self) -> SamplerState {
        SamplerState {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
            epoch: self.epoch,
            cursor: self.cursor,
        }
    }

    pub fn restore(state: SamplerState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
        rng.set_word_pos(state.word_pos);
        ClipSampler {
            seed: state.seed,
            rng,
            epoch: state.epoch,
            cursor: state.cursor,
            order: Vec::new(),
        }
    }

    fn epoch_order(&self, eligible: &[usize]) -> Vec<usize> {
        let mut order = eligible.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(self.epoch + 1),
        );
        order.shuffle(&mut rng);
        order
    }

    fn next_sequence(&mut self, eligible: &[usize]) -> usize {
        if self.order.is_empty() {
            self.order = self.epoch_order(eligible);
        }
        if self.cursor >= self.order.len() {
            self.epoch += 1;
            self.cursor = 0;
            self.order = self.epoch_order(eligible);
        }
        let s = self.order[self.cursor];
        self.cursor += 1;
        s
    }

    pub fn sample(&mut self, sequences: &[Vec<FrameBundle>], spec: ClipSpec) -> Result<ClipBatch> {
        spec.validate()?;
        let lr_crop = spec.lr_crop();
        let mut eligible = Vec::new();
        for (i, seq) in sequences.iter().enumerate() {
            let Some(first) = seq.first() else {
                warn!("sequence {i} is empty; skipped");
                continue;
            };
            if seq.len() < spec.clip_len {
                warn!(
                    "sequence {i} has {} frames, fewer than {}; skipped",
                    seq.len(),
                    spec.clip_len
                );
                continue;
            }
            if first.lr_color.height() < lr_crop || first.lr_color.width() < lr_crop {
                warn!("sequence {i} is smaller than the {lr_crop}px LR crop; skipped");
                continue;
            }
            eligible.push(i);
        }
        if eligible.is_empty() {
            return Err(Error::config(
                "no sequence is long and large enough for the clip spec",
            ));
        }
        let mut clips = Vec::with_capacity(spec.batch);
        for _ in 0..spec.batch {
            let sequence = self.next_sequence(&eligible);
            let seq = &sequences[sequence];
            let start = self.rng.gen_range(0..=seq.len() - spec.clip_len);
            let (h, w) = (seq[0].lr_color.height(), seq[0].lr_color.width());
            let ly = self.rng.gen_range(0..=h - lr_crop);
            let lx = self.rng.gen_range(0..=w - lr_crop);
            let frames = seq[start..start + spec.clip_len]
                .iter()
                .map(|f| f.crop(ly, lx, lr_crop, spec.scale))
                .collect::<Result<Vec<_>>>()?;
            clips.push(Clip {
                sequence,
                start,
                lr_origin: (ly, lx),
                hr_origin: (ly * spec.scale, lx * spec.scale),
                frames,
            });
        }
        Ok(ClipBatch { spec, clips })
    }
}

/// One batch from a fresh sampler seeded with `seed`.
pub fn sample_clips(
    sequences: &[Vec<FrameBundle>],
    spec: ClipSpec,
    seed: u64,
) -> Result<ClipBatch> {
    ClipSampler::new(seed).sample(sequences, spec)
}

impl FrameBundle {
    /// Square crop of side `lr_size` at LR origin (y, x) and the aligned HR
    /// crop of the target.
    pub fn crop(&self, y: usize, x: usize, lr_size: usize, scale: usize) -> Result<FrameBundle> {
        let hr_target = match &self.hr_target {
            Some(t) => Some(t.crop(y * scale, x * scale, lr_size * scale, lr_size * scale)?),
            None => None,
        };
        Ok(FrameBundle {
            lr_color: self.lr_color.crop(y, x, lr_size, lr_size)?,
            lr_depth: self.lr_depth.crop(y, x, lr_size, lr_size)?,
            lr_motion: MotionField::new(self.lr_motion.raster().crop(y, x, lr_size, lr_size)?)?,
            jitter: self.jitter,
            hr_target,
        })
    }
}

/// Splits items per scene: each scene's items are shuffled with a generator
/// derived from `seed` and the first `round(fraction · n)` go to training.
/// Scenes with fewer than two items go entirely to training.
pub fn split_segments<T: Clone>(
    items: &[T],
    scene_of: impl Fn(&T) -> &str,
    fraction: f64,
    seed: u64,
) -> (Vec<T>, Vec<T>) {
    let mut by_scene: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_scene.entry(scene_of(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (scene, mut idx) in by_scene {
        if idx.len() < 2 {
            warn!("scene {scene} has fewer than 2 segments; all go to training");
            train.extend(idx.iter().map(|&i| items[i].clone()));
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend(idx[..n_train].iter().map(|&i| items[i].clone()));
        val.extend(idx[n_train..].iter().map(|&i| items[i].clone()));
    }
    (train, val)
}
