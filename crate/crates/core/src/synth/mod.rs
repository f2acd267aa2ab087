//! Procedural 2.5D scenes with analytic ground truth.
//!
//! A scene is an infinite textured background plane plus flat sprites, each
//! at its own constant depth, translating under a moving camera. World and
//! screen coordinates are in HR pixels; screen point `q` at frame `t` shows
//! world point `q + camera[t]`. Because every surface translates rigidly,
//! backward motion is known exactly: for a surface with world position
//! `pos`, `mv = (camera[t] − camera[t−1]) − (pos[t] − pos[t−1])`.
//!
//! Low-resolution frames point-sample geometry at jittered LR pixel centers
//! and box-prefilter textures; the HR reference is a 4×4 supersampled box
//! render. Motion is written the way an engine would store it: normalized,
//! vertical first, y-up, and including the jitter difference between the
//! two frames.

mod dataset;
mod texture;

pub use dataset::{make_dataset, random_scene, DatasetConfig, DatasetIndex};
pub use texture::{random_color, Layer, Pattern, Rgb, Texture};

use rayon::prelude::*;

use crate::data::{decode_motion, encode_motion, jitter_for_frame, FrameBundle, MotionConvention};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::{JitterOffset, MotionField, DILATION_BLOCK};

/// Convention of the motion files written by the generator.
pub const SYNTH_MOTION: MotionConvention = MotionConvention {
    flip_y: true,
    negate: false,
};

/// Sub-samples per axis of the HR reference.
pub const HR_SUPERSAMPLING: usize = 4;

const PREFILTER_TAPS: usize = 4;
const OCCLUSION_RADIUS: isize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rect,
    Disc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub shape: Shape,
    /// Width and height in HR pixels.
    pub size: [f32; 2],
    pub texture: Texture,
    pub depth: f32,
    /// World position of the top-left corner, one entry per frame.
    pub path: Vec<[f32; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JitterMode {
    /// Cyclic Halton(2, 3) offsets indexed by the global frame number.
    Halton,
    Zero,
    /// Explicit offsets, cycled.
    Fixed(Vec<JitterOffset>),
}

/// Texture prefilter of the LR render.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prefilter {
    Point,
    /// Box of the given width in HR pixels.
    Box(f32),
    /// Box of width `scale · 2^bias` HR pixels: one LR pixel at bias 0.
    MipBias(f32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub seed: u64,
    pub hr_height: usize,
    pub hr_width: usize,
    pub scale: usize,
    pub frames: usize,
    /// Global index of the first frame; sets the jitter phase.
    pub first_frame: usize,
    pub background: Texture,
    pub background_depth: f32,
    /// World offset of the view, one entry per frame.
    pub camera: Vec<[f32; 2]>,
    pub sprites: Vec<Sprite>,
    /// Half-open frame ranges over which nothing in view moves.
    pub static_ranges: Vec<[usize; 2]>,
    pub jitter: JitterMode,
    pub prefilter: Prefilter,
}

#[derive(Clone, Copy)]
struct Hit {
    id: u16,
    depth: f32,
    local: [f32; 2],
}

impl SceneSpec {
    pub fn lr_dims(&self) -> (usize, usize) {
        (self.hr_height / self.scale, self.hr_width / self.scale)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = DILATION_BLOCK * self.scale;
        let fail = |msg: String| Err(Error::config(format!("scene {}: {msg}", self.name)));
        if self.scale == 0 || self.hr_height % unit != 0 || self.hr_width % unit != 0 {
            return fail(format!(
                "HR size {}x{} must be a multiple of {unit}",
                self.hr_height, self.hr_width
            ));
        }
        if self.hr_height == 0 || self.hr_width == 0 {
            return fail("empty frame".into());
        }
        if self.frames == 0 || self.camera.len() != self.frames {
            return fail(format!("camera path needs {} entries", self.frames));
        }
        if !(0.0..=1.0).contains(&self.background_depth) {
            return fail("background depth outside [0, 1]".into());
        }
        let mut depths: Vec<f32> = self.sprites.iter().map(|s| s.depth).collect();
        depths.push(self.background_depth);
        for s in &self.sprites {
            if s.path.len() != self.frames {
                return fail(format!("sprite path needs {} entries", self.frames));
            }
            if !(s.depth > 0.0 && s.depth < 1.0) {
                return fail(format!("sprite depth {} outside (0, 1)", s.depth));
            }
        }
        depths.sort_by(f32::total_cmp);
        if depths.windows(2).any(|w| w[0] == w[1]) {
            return fail("surface depths must be distinct".into());
        }
        for r in &self.static_ranges {
            if r[0] >= r[1] || r[1] > self.frames {
                return fail(format!("static range {r:?} outside 0..{}", self.frames));
            }
        }
        if let JitterMode::Fixed(v) = &self.jitter {
            if v.is_empty() {
                return fail("fixed jitter list is empty".into());
            }
        }
        Ok(())
    }

    /// Jitter of frame `t`; `t = −1` wraps to the previous sequence phase.
    pub fn jitter_at(&self, t: isize) -> JitterOffset {
        match &self.jitter {
            JitterMode::Zero => JitterOffset::ZERO,
            JitterMode::Halton => {
                jitter_for_frame((self.first_frame as isize + t).rem_euclid(16) as usize)
            }
            JitterMode::Fixed(v) => v[t.rem_euclid(v.len() as isize) as usize],
        }
    }

    fn clamp_t(&self, t: isize) -> usize {
        t.clamp(0, self.frames as isize - 1) as usize
    }

    fn camera_at(&self, t: isize) -> [f32; 2] {
        self.camera[self.clamp_t(t)]
    }

    /// Sprites ordered front to back.
    fn depth_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sprites.len()).collect();
        order.sort_by(|&a, &b| self.sprites[a].depth.total_cmp(&self.sprites[b].depth));
        order
    }

    fn hit(&self, order: &[usize], t: isize, q: [f32; 2]) -> Hit {
        let cam = self.camera_at(t);
        let w = [q[0] + cam[0], q[1] + cam[1]];
        let ti = self.clamp_t(t);
        for &k in order {
            let s = &self.sprites[k];
            let p = s.path[ti];
            let l = [w[0] - p[0], w[1] - p[1]];
            let inside = match s.shape {
                Shape::Rect => l[0] >= 0.0 && l[1] >= 0.0 && l[0] < s.size[0] && l[1] < s.size[1],
                Shape::Disc => {
                    let u = (l[0] - 0.5 * s.size[0]) / (0.5 * s.size[0]);
                    let v = (l[1] - 0.5 * s.size[1]) / (0.5 * s.size[1]);
                    u * u + v * v <= 1.0
                }
            };
            if inside {
                return Hit {
                    id: k as u16 + 1,
                    depth: s.depth,
                    local: l,
                };
            }
        }
        Hit {
            id: 0,
            depth: self.background_depth,
            local: w,
        }
    }

    fn texture(&self, id: u16) -> &Texture {
        if id == 0 {
            &self.background
        } else {
            &self.sprites[id as usize - 1].texture
        }
    }

    /// Color of the continuous scene at screen point `q` (HR pixels).
    pub fn sample_point(&self, t: usize, q: [f32; 2]) -> Rgb {
        let h = self.hit(&self.depth_order(), t as isize, q);
        self.texture(h.id).eval(h.local[0], h.local[1])
    }

    /// Backward motion in HR pixels of surface `id` between `t−1` and `t`.
    fn motion(&self, id: u16, t: isize) -> [f32; 2] {
        let (c1, c0) = (self.camera_at(t), self.camera_at(t - 1));
        let mut mv = [c1[0] - c0[0], c1[1] - c0[1]];
        if id > 0 {
            let s = &self.sprites[id as usize - 1];
            let (p1, p0) = (s.path[self.clamp_t(t)], s.path[self.clamp_t(t - 1)]);
            mv[0] -= p1[0] - p0[0];
            mv[1] -= p1[1] - p0[1];
        }
        mv
    }

    fn prefilter_width(&self) -> f32 {
        match self.prefilter {
            Prefilter::Point => 0.0,
            Prefilter::Box(w) => w,
            Prefilter::MipBias(bias) => self.scale as f32 * bias.exp2(),
        }
    }

    fn surface_ids(&self, order: &[usize], t: isize) -> Vec<u16> {
        let (h, w) = (self.hr_height, self.hr_width);
        let mut ids = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                ids.push(self.hit(order, t, [x as f32 + 0.5, y as f32 + 0.5]).id);
            }
        }
        ids
    }

    /// Renders frame `t` and its ground truth.
    pub fn render_frame(&self, t: usize) -> Result<GroundTruthFrame> {
        if t >= self.frames {
            return Err(Error::config(format!(
                "frame {t} outside 0..{}",
                self.frames
            )));
        }
        let order = self.depth_order();
        let ti = t as isize;
        let s = self.scale as f32;
        let (lh, lw) = self.lr_dims();
        let (hh, hw) = (self.hr_height, self.hr_width);
        let jitter = self.jitter_at(ti);
        let previous_jitter = self.jitter_at(ti - 1);
        let width = self.prefilter_width();

        let mut lr_color = Raster::zeros(3, lh, lw);
        let mut lr_depth = Raster::zeros(1, lh, lw);
        let mut analytic_lr = Raster::zeros(2, lh, lw);
        let mut engine = Raster::zeros(2, lh, lw);
        for y in 0..lh {
            for x in 0..lw {
                let q = [
                    (x as f32 + 0.5 + jitter.x) * s,
                    (y as f32 + 0.5 + jitter.y) * s,
                ];
                let h = self.hit(&order, ti, q);
                let c = self
                    .texture(h.id)
                    .eval_box(h.local[0], h.local[1], width, PREFILTER_TAPS);
                for (ch, v) in c.iter().enumerate() {
                    lr_color.set(ch, y, x, v.clamp(0.0, 1.0));
                }
                lr_depth.set(0, y, x, h.depth);
                let mv = self.motion(h.id, ti);
                let (ax, ay) = (mv[0] / s, mv[1] / s);
                analytic_lr.set(0, y, x, ax);
                analytic_lr.set(1, y, x, ay);
                engine.set(0, y, x, ax + (jitter.x - previous_jitter.x));
                engine.set(1, y, x, ay + (jitter.y - previous_jitter.y));
            }
        }
        let lr_motion_raw = encode_motion(&MotionField::new(engine)?, SYNTH_MOTION);
        let lr_motion = decode_motion(&lr_motion_raw, SYNTH_MOTION)?;

        let n = HR_SUPERSAMPLING;
        let inv = 1.0 / (n * n) as f32;
        let mut hr_reference = Raster::zeros(3, hh, hw);
        let mut analytic_hr = Raster::zeros(2, hh, hw);
        for y in 0..hh {
            for x in 0..hw {
                let mut acc = [0.0f32; 3];
                for j in 0..n {
                    for i in 0..n {
                        let q = [
                            x as f32 + (i as f32 + 0.5) / n as f32,
                            y as f32 + (j as f32 + 0.5) / n as f32,
                        ];
                        let h = self.hit(&order, ti, q);
                        let c = self.texture(h.id).eval(h.local[0], h.local[1]);
                        for ch in 0..3 {
                            acc[ch] += c[ch];
                        }
                    }
                }
                for (ch, v) in acc.iter().enumerate() {
                    hr_reference.set(ch, y, x, (v * inv).clamp(0.0, 1.0));
                }
                let h = self.hit(&order, ti, [x as f32 + 0.5, y as f32 + 0.5]);
                let mv = self.motion(h.id, ti);
                analytic_hr.set(0, y, x, mv[0]);
                analytic_hr.set(1, y, x, mv[1]);
            }
        }

        let ids_now = self.surface_ids(&order, ti);
        let ids_prev = self.surface_ids(&order, ti - 1);
        let occlusion = occlusion_mask(&ids_now, &ids_prev, &analytic_hr, hh, hw);

        Ok(GroundTruthFrame {
            index: self.first_frame + t,
            jitter,
            previous_jitter,
            hr_reference,
            lr_color,
            lr_depth,
            lr_motion_raw,
            lr_motion,
            analytic_lr_motion: MotionField::new(analytic_lr)?,
            analytic_hr_motion: MotionField::new(analytic_hr)?,
            occlusion,
        })
    }
}

/// 1 where the backward correspondence of an HR pixel is unreliable: near a
/// silhouette now or at the source position, or sourced from off screen.
fn occlusion_mask(now: &[u16], prev: &[u16], mv: &Raster, h: usize, w: usize) -> Raster {
    let r = OCCLUSION_RADIUS;
    let uniform = |ids: &[u16], cy: isize, cx: isize, id: u16| -> bool {
        if cy - r < 0 || cx - r < 0 || cy + r >= h as isize || cx + r >= w as isize {
            return false;
        }
        (cy - r..=cy + r).all(|y| (cx - r..=cx + r).all(|x| ids[y as usize * w + x as usize] == id))
    };
    Raster::from_fn(1, h, w, |_, y, x| {
        let id = now[y * w + x];
        let sy = (y as f32 + 0.5 + mv.get(1, y, x)).floor() as isize;
        let sx = (x as f32 + 0.5 + mv.get(0, y, x)).floor() as isize;
        let valid = uniform(now, y as isize, x as isize, id) && uniform(prev, sy, sx, id);
        if valid {
            0.0
        } else {
            1.0
        }
    })
}

/// One rendered frame with everything the generator knows about it.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthFrame {
    pub index: usize,
    pub jitter: JitterOffset,
    pub previous_jitter: JitterOffset,
    pub hr_reference: Raster,
    pub lr_color: Raster,
    pub lr_depth: Raster,
    /// Motion as written to disk (see [`SYNTH_MOTION`]).
    pub lr_motion_raw: Raster,
    /// Decoded engine motion, jitter difference included.
    pub lr_motion: MotionField,
    /// True backward motion at the jittered LR sample points, LR pixels.
    pub analytic_lr_motion: MotionField,
    /// True backward motion at HR pixel centers, HR pixels.
    pub analytic_hr_motion: MotionField,
    /// HR mask, 1 where backward correspondence is invalid.
    pub occlusion: Raster,
}

impl GroundTruthFrame {
    pub fn to_bundle(&self) -> FrameBundle {
        FrameBundle {
            lr_color: self.lr_color.clone(),
            lr_depth: self.lr_depth.clone(),
            lr_motion: self.lr_motion.clone(),
            jitter: self.jitter,
            hr_target: Some(self.hr_reference.clone()),
        }
    }
}

/// Renders every frame of a scene, in parallel over frames.
pub fn render_sequence(spec: &SceneSpec) -> Result<Vec<GroundTruthFrame>> {
    spec.validate()?;
    (0..spec.frames)
        .into_par_iter()
        .map(|t| spec.render_frame(t))
        .collect()
}
