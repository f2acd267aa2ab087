//! Re-projection of the previous high-resolution output onto the current frame.
//!
//! Motion vectors follow the backward-flow convention: for pixel `p` at time
//! `t`, `p + mv(p)` is where the same surface was at `t − 1`. Channel 0 is
//! horizontal (+x right), channel 1 vertical (+y down), in pixels of the
//! raster the field lives on.
//!
//! Stages, in order: [`compensate_jitter`] removes the viewport jitter that
//! the engine baked into the vectors, [`dilate_mv`] builds a block-wise
//! high-resolution field from the nearest-to-camera pixel of each block, and
//! [`reproject`] bilinearly warps the previous color and feature planes and
//! packs them to input resolution with space-to-depth.

use crate::data::FrameBundle;
use crate::error::{Error, Result};
use crate::raster::{bilinear_sample, space_to_depth, Raster, Real};

/// HR block size used by depth-informed dilation.
pub const DILATION_BLOCK: usize = 8;

/// Two-channel backward displacement field.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField<T = f32>(Raster<T>);

impl<T: Real> MotionField<T> {
    pub fn new(raster: Raster<T>) -> Result<Self> {
        if raster.channels() != 2 {
            return Err(Error::config(format!(
                "motion field needs 2 channels, got {}",
                raster.channels()
            )));
        }
        if !raster.is_finite() {
            return Err(Error::config("motion field contains non-finite values"));
        }
        Ok(MotionField(raster))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        MotionField(Raster::zeros(2, height, width))
    }

    pub fn constant(height: usize, width: usize, dx: T, dy: T) -> Self {
        MotionField(Raster::from_fn(2, height, width, |c, _, _| {
            if c == 0 {
                dx
            } else {
                dy
            }
        }))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }
    pub fn width(&self) -> usize {
        self.0.width()
    }
    pub fn dx(&self, y: usize, x: usize) -> T {
        self.0.get(0, y, x)
    }
    pub fn dy(&self, y: usize, x: usize) -> T {
        self.0.get(1, y, x)
    }
    pub fn raster(&self) -> &Raster<T> {
        &self.0
    }
    pub fn into_raster(self) -> Raster<T> {
        self.0
    }

    pub fn cast<U: Real>(&self) -> MotionField<U> {
        MotionField(self.0.cast())
    }

    /// Absolute sample coordinates `p + mv(p)` for every pixel.
    pub fn sample_positions(&self) -> Raster<T> {
        Raster::from_fn(2, self.height(), self.width(), |c, y, x| {
            let base = if c == 0 { x } else { y };
            T::of(base as f64) + self.0.get(c, y, x)
        })
    }
}

/// Sub-pixel camera offset in low-resolution pixels.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct JitterOffset {
    pub x: f32,
    pub y: f32,
}

impl JitterOffset {
    pub fn new(x: f32, y: f32) -> Result<Self> {
        if !(-0.5..=0.5).contains(&x) || !(-0.5..=0.5).contains(&y) {
            return Err(Error::config(format!(
                "jitter ({x}, {y}) outside [-0.5, 0.5]"
            )));
        }
        Ok(JitterOffset { x, y })
    }

    pub const ZERO: JitterOffset = JitterOffset { x: 0.0, y: 0.0 };
}

/// Constant added to every vector by [`compensate_jitter`].
pub fn jitter_correction(previous: JitterOffset, current: JitterOffset) -> (f32, f32) {
    (previous.x - current.x, previous.y - current.y)
}

/// Adds the previous frame's jitter and subtracts the current one.
pub fn compensate_jitter(
    mv: &MotionField,
    previous: JitterOffset,
    current: JitterOffset,
) -> MotionField {
    let (cx, cy) = jitter_correction(previous, current);
    let r = &mv.0;
    MotionField(Raster::from_fn(2, r.height(), r.width(), |c, y, x| {
        r.get(c, y, x) + if c == 0 { cx } else { cy }
    }))
}

/// LR index range `[lo, hi]` overlapped by the HR interval `[start, end)`.
fn footprint(start: usize, end: usize, scale: usize) -> (usize, usize) {
    (start / scale, (end - 1) / scale)
}

/// Block-wise HR motion field: every `block × block` HR tile takes the
/// vector of the lowest-depth LR pixel in its footprint (first in row-major
/// order on ties), scaled by `scale` into HR pixels.
pub fn dilate_mv(
    mv: &MotionField,
    depth: &Raster,
    scale: usize,
    block: usize,
) -> Result<MotionField> {
    let (h, w) = (mv.height(), mv.width());
    if depth.channels() != 1 || depth.height() != h || depth.width() != w {
        return Err(Error::config(format!(
            "dilate_mv: depth {:?} does not match motion {h}x{w}",
            depth.shape()
        )));
    }
    if scale == 0 || block == 0 {
        return Err(Error::config("dilate_mv: scale and block must be positive"));
    }
    let (hh, hw) = (h * scale, w * scale);
    let s = scale as f32;
    let mut out = Raster::zeros(2, hh, hw);
    for ty in (0..hh).step_by(block) {
        let ty1 = (ty + block).min(hh);
        let (ly0, ly1) = footprint(ty, ty1, scale);
        for tx in (0..hw).step_by(block) {
            let tx1 = (tx + block).min(hw);
            let (lx0, lx1) = footprint(tx, tx1, scale);
            let mut best = (ly0, lx0);
            let mut best_depth = depth.get(0, ly0, lx0);
            for ly in ly0..=ly1 {
                for lx in lx0..=lx1 {
                    let d = depth.get(0, ly, lx);
                    if d < best_depth {
                        best_depth = d;
                        best = (ly, lx);
                    }
                }
            }
            let dx = mv.dx(best.0, best.1) * s;
            let dy = mv.dy(best.0, best.1) * s;
            for y in ty..ty1 {
                for x in tx..tx1 {
                    out.set(0, y, x, dx);
                    out.set(1, y, x, dy);
                }
            }
        }
    }
    Ok(MotionField(out))
}

/// HR field without dilation: each HR pixel takes its own LR pixel's vector.
pub fn upsample_mv(mv: &MotionField, scale: usize) -> MotionField {
    let s = scale as f32;
    let r = &mv.0;
    MotionField(Raster::from_fn(
        2,
        r.height() * scale,
        r.width() * scale,
        |c, y, x| r.get(c, y / scale, x / scale) * s,
    ))
}

/// Previous output and features warped to the current frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedHistory<T = f32> {
    /// Warped color followed by warped features, at HR (4 channels).
    pub hr: Raster<T>,
    /// `hr` packed to LR with space-to-depth (4·S² channels).
    pub packed: Raster<T>,
}

impl<T: Real> WarpedHistory<T> {
    pub fn color(&self) -> Raster<T> {
        self.hr
            .slice_channels(0, 3)
            .expect("warped history has 4 channels")
    }
    pub fn features(&self) -> Raster<T> {
        self.hr
            .slice_channels(3, 1)
            .expect("warped history has 4 channels")
    }
}

/// Warps `[color, features]` by `mv_hr` and packs the result to LR.
pub fn reproject<T: Real>(
    prev_color: &Raster<T>,
    prev_features: &Raster<T>,
    mv_hr: &MotionField<T>,
    scale: usize,
) -> Result<WarpedHistory<T>> {
    if prev_color.channels() != 3 || prev_features.channels() != 1 {
        return Err(Error::config(
            "reproject expects 3 color and 1 feature channel",
        ));
    }
    let dims = (mv_hr.height(), mv_hr.width());
    if (prev_color.height(), prev_color.width()) != dims
        || (prev_features.height(), prev_features.width()) != dims
    {
        return Err(Error::config("reproject: history and motion sizes differ"));
    }
    let history = Raster::concat(&[prev_color, prev_features])?;
    let hr = bilinear_sample(&history, &mv_hr.sample_positions())?;
    let packed = space_to_depth(&hr, scale)?;
    Ok(WarpedHistory { hr, packed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WarpOptions {
    pub use_dilation: bool,
    pub block: usize,
}

impl Default for WarpOptions {
    fn default() -> Self {
        WarpOptions {
            use_dilation: true,
            block: DILATION_BLOCK,
        }
    }
}

/// Recurrent state carried between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Carry<T = f32> {
    pub color: Raster<T>,
    pub features: Raster<T>,
    /// Jitter of the frame the carry was produced for. `None` when the carry
    /// was built from the current frame itself and needs no motion.
    pub jitter: Option<JitterOffset>,
}

/// HR motion used to warp `carry` onto `frame`: jitter compensation then
/// dilation (or plain upsampling when dilation is disabled).
pub fn history_motion(
    frame: &FrameBundle,
    previous_jitter: Option<JitterOffset>,
    scale: usize,
    options: WarpOptions,
) -> Result<MotionField> {
    let (h, w) = (frame.lr_motion.height(), frame.lr_motion.width());
    let Some(prev) = previous_jitter else {
        return Ok(MotionField::zeros(h * scale, w * scale));
    };
    let mv = compensate_jitter(&frame.lr_motion, prev, frame.jitter);
    if options.use_dilation {
        dilate_mv(&mv, &frame.lr_depth, scale, options.block)
    } else {
        Ok(upsample_mv(&mv, scale))
    }
}

/// Full warping module: compensate, dilate, reproject.
pub fn warp_pipeline<T: Real>(
    frame: &FrameBundle,
    carry: &Carry<T>,
    scale: usize,
    options: WarpOptions,
) -> Result<WarpedHistory<T>> {
    let mv = history_motion(frame, carry.jitter, scale, options)?;
    reproject(&carry.color, &carry.features, &mv.cast(), scale)
}
