use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{jitter_for_frame, FrameBundle};
use crate::error::{Error, Result};
use crate::model::{blend, init_carry, Model};
use crate::raster::Raster;
use crate::warp::{history_motion, reproject, Carry, MotionField};

/// Median wall-clock time per stage of one inference step, in ms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    /// Jitter compensation plus depth-informed dilation.
    pub mv_dilation_ms: f64,
    /// Bilinear re-projection and space-to-depth.
    pub warping_ms: f64,
    /// Network and blending.
    pub network_ms: f64,
    pub total_ms: f64,
    pub steps: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Random LR frames with moderate motion.
fn profile_frames(h: usize, w: usize, count: usize) -> Result<Vec<FrameBundle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    (0..count)
        .map(|t| {
            Ok(FrameBundle {
                lr_color: Raster::from_fn(3, h, w, |_, _, _| rng.gen_range(0.0..1.0)),
                lr_depth: Raster::from_fn(1, h, w, |_, _, _| rng.gen_range(0.0..1.0)),
                lr_motion: MotionField::new(Raster::from_fn(2, h, w, |_, _, _| {
                    rng.gen_range(-2.0..2.0)
                }))?,
                jitter: jitter_for_frame(t),
                hr_target: None,
            })
        })
        .collect()
}

/// Times `steps` inference steps on `lr_h × lr_w` inputs after `warmup`
/// untimed ones. Kernels come from the precomputed jitter cache.
pub fn profile(
    model: &Model,
    lr_h: usize,
    lr_w: usize,
    steps: usize,
    warmup: usize,
) -> Result<Timing> {
    if steps == 0 {
        return Err(Error::config("profile needs at least one timed step"));
    }
    let s = model.config.scale;
    let frames = profile_frames(lr_h, lr_w, 16)?;
    let cache = model.kernel_cache();
    let mut carry: Carry = init_carry(&frames[0], s)?;
    let (mut dil, mut warp, mut net, mut total) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..warmup + steps {
        let f = &frames[i % frames.len()];
        let kernels = model.kernels_for(&cache, f.jitter);
        let t0 = Instant::now();
        let mv = history_motion(f, carry.jitter, s, model.config.warp_options())?;
        let t1 = Instant::now();
        let warped = reproject(&carry.color, &carry.features, &mv, s)?;
        let t2 = Instant::now();
        let o = model.forward_step(&kernels, &f.lr_color, &f.lr_depth, &warped)?;
        let y = if model.config.use_blending {
            blend(&o.alpha, &o.candidate, &warped.hr.slice_channels(0, 3)?)?
        } else {
            o.candidate
        };
        let t3 = Instant::now();
        carry = Carry {
            color: y,
            features: o.features,
            jitter: Some(f.jitter),
        };
        if i >= warmup {
            let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
            dil.push(ms(t0, t1));
            warp.push(ms(t1, t2));
            net.push(ms(t2, t3));
            total.push(ms(t0, t3));
        }
    }
    Ok(Timing {
        mv_dilation_ms: median(dil),
        warping_ms: median(warp),
        network_ms: median(net),
        total_ms: median(total),
        steps,
    })
}
