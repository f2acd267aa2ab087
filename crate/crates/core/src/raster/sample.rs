use super::{Raster, Real};
use crate::error::{Error, Result};

/// Four clamped source indices and fractional offsets for one output pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BilinearTap<T> {
    i00: u32,
    i01: u32,
    i10: u32,
    i11: u32,
    fx: T,
    fy: T,
}

/// Precomputed sampling pattern, reusable across channels and for backward.
#[derive(Clone, Debug)]
pub(crate) struct SamplePlan<T> {
    pub src_h: usize,
    pub src_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    taps: Vec<BilinearTap<T>>,
}

impl<T: Real> SamplePlan<T> {
    /// `positions` holds absolute (x, y) sample coordinates in source pixels.
    pub fn new(src_h: usize, src_w: usize, positions: &Raster<T>) -> Result<Self> {
        if positions.channels() != 2 {
            return Err(Error::config(format!(
                "sample positions need 2 channels, got {}",
                positions.channels()
            )));
        }
        if src_h == 0 || src_w == 0 {
            return Err(Error::config("bilinear sample from an empty source"));
        }
        let (out_h, out_w) = (positions.height(), positions.width());
        let px = positions.plane(0);
        let py = positions.plane(1);
        let max_x = T::of((src_w - 1) as f64);
        let max_y = T::of((src_h - 1) as f64);
        let taps = px
            .iter()
            .zip(py)
            .map(|(&x, &y)| {
                let x = clamp(x, max_x);
                let y = clamp(y, max_y);
                let x0 = x.floor();
                let y0 = y.floor();
                let xi = x0.as_f64() as usize;
                let yi = y0.as_f64() as usize;
                let xi1 = (xi + 1).min(src_w - 1);
                let yi1 = (yi + 1).min(src_h - 1);
                BilinearTap {
                    i00: (yi * src_w + xi) as u32,
                    i01: (yi * src_w + xi1) as u32,
                    i10: (yi1 * src_w + xi) as u32,
                    i11: (yi1 * src_w + xi1) as u32,
                    fx: x - x0,
                    fy: y - y0,
                }
            })
            .collect();
        Ok(SamplePlan {
            src_h,
            src_w,
            out_h,
            out_w,
            taps,
        })
    }

    pub fn forward(&self, source: &Raster<T>) -> Raster<T> {
        debug_assert_eq!((source.height(), source.width()), (self.src_h, self.src_w));
        let mut out = Raster::zeros(source.channels(), self.out_h, self.out_w);
        for c in 0..source.channels() {
            let src = source.plane(c);
            for (dst, t) in out.plane_mut(c).iter_mut().zip(&self.taps) {
                let v00 = src[t.i00 as usize];
                let v01 = src[t.i01 as usize];
                let v10 = src[t.i10 as usize];
                let v11 = src[t.i11 as usize];
                // Lerp form keeps constants and lattice points exact.
                let top = v00 + t.fx * (v01 - v00);
                let bottom = v10 + t.fx * (v11 - v10);
                *dst = top + t.fy * (bottom - top);
            }
        }
        out
    }

    pub fn backward(&self, channels: usize, grad_out: &Raster<T>) -> Raster<T> {
        let mut grad = Raster::zeros(channels, self.src_h, self.src_w);
        for c in 0..channels {
            let g = grad_out.plane(c);
            let dst = grad.plane_mut(c);
            for (&go, t) in g.iter().zip(&self.taps) {
                let one = T::one();
                dst[t.i00 as usize] += go * (one - t.fx) * (one - t.fy);
                dst[t.i01 as usize] += go * t.fx * (one - t.fy);
                dst[t.i10 as usize] += go * (one - t.fx) * t.fy;
                dst[t.i11 as usize] += go * t.fx * t.fy;
            }
        }
        grad
    }
}

#[inline]
fn clamp<T: Real>(v: T, max: T) -> T {
    if v.is_nan() || v < T::zero() {
        T::zero()
    } else if v > max {
        max
    } else {
        v
    }
}

/// Samples `source` at the absolute (x, y) coordinates stored in the two
/// channels of `positions`. Coordinates are clamped to the source bounds.
pub fn bilinear_sample<T: Real>(source: &Raster<T>, positions: &Raster<T>) -> Result<Raster<T>> {
    let plan = SamplePlan::new(source.height(), source.width(), positions)?;
    Ok(plan.forward(source))
}

/// Catmull-Rom cubic convolution weight (a = −0.5).
pub fn catmull_rom_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per output coordinate: four clamped source indices and their weights.
fn cubic_axis<T: Real>(src_len: usize, scale: usize) -> Vec<([usize; 4], [T; 4])> {
    (0..src_len * scale)
        .map(|o| {
            let u = (o as f64 + 0.5) / scale as f64 - 0.5;
            let base = u.floor();
            let frac = u - base;
            let mut idx = [0usize; 4];
            let mut w = [T::zero(); 4];
            for k in 0..4 {
                let i = base as isize - 1 + k as isize;
                idx[k] = i.clamp(0, src_len as isize - 1) as usize;
                w[k] = T::of(catmull_rom_weight(frac - (k as f64 - 1.0)));
            }
            (idx, w)
        })
        .collect()
}

/// Four-tap filter written relative to the second tap so that a constant
/// signal passes through unchanged regardless of rounding in the weights.
#[inline]
fn cubic_apply<T: Real>(v: [T; 4], w: &[T; 4]) -> T {
    v[1] + w[0] * (v[0] - v[1]) + w[2] * (v[2] - v[1]) + w[3] * (v[3] - v[1])
}

/// Catmull-Rom upscaling by an integer factor with pixel-center alignment
/// and border clamping.
pub fn bicubic_resize<T: Real>(input: &Raster<T>, scale: usize) -> Result<Raster<T>> {
    if scale == 0 {
        return Err(Error::config("bicubic_resize scale must be positive"));
    }
    let (c, h, w) = input.shape();
    let (oh, ow) = (h * scale, w * scale);
    let xs = cubic_axis::<T>(w, scale);
    let ys = cubic_axis::<T>(h, scale);
    let mut out = Raster::zeros(c, oh, ow);
    let mut rows = vec![T::zero(); h * ow];
    for ch in 0..c {
        let src = input.plane(ch);
        for y in 0..h {
            let line = &src[y * w..][..w];
            for (ox, (idx, wt)) in xs.iter().enumerate() {
                let v = [line[idx[0]], line[idx[1]], line[idx[2]], line[idx[3]]];
                rows[y * ow + ox] = cubic_apply(v, wt);
            }
        }
        let dst = out.plane_mut(ch);
        for (oy, (idx, wt)) in ys.iter().enumerate() {
            for ox in 0..ow {
                let v = [
                    rows[idx[0] * ow + ox],
                    rows[idx[1] * ow + ox],
                    rows[idx[2] * ow + ox],
                    rows[idx[3] * ow + ox],
                ];
                dst[oy * ow + ox] = cubic_apply(v, wt);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize) -> Raster<f32> {
        Raster::from_fn(2, h, w, |c, y, x| if c == 0 { x as f32 } else { y as f32 })
    }

    #[test]
    fn lattice_positions_reproduce_source() {
        let src = Raster::from_fn(3, 4, 5, |c, y, x| (c * 31 + y * 7 + x) as f32 * 0.013);
        assert_eq!(bilinear_sample(&src, &grid(4, 5)).unwrap(), src);
    }

    #[test]
    fn midpoint_is_average() {
        let src = Raster::from_vec(1, 1, 2, vec![0.0f32, 1.0]).unwrap();
        let pos = Raster::from_vec(2, 1, 1, vec![0.5f32, 0.0]).unwrap();
        assert_eq!(bilinear_sample(&src, &pos).unwrap().data(), &[0.5]);
    }

    #[test]
    fn out_of_range_positions_clamp_to_border() {
        let src = Raster::from_vec(1, 2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let pos = Raster::from_vec(2, 1, 2, vec![-5.0f32, 9.0, -1.0, 7.5]).unwrap();
        assert_eq!(bilinear_sample(&src, &pos).unwrap().data(), &[1.0, 4.0]);
    }

    #[test]
    fn constants_survive_resampling() {
        let src = Raster::<f32>::filled(2, 5, 3, 0.37);
        let pos = Raster::from_fn(2, 4, 4, |c, y, x| (c as f32 + 0.31) * (x + y) as f32 * 0.41);
        assert!(bilinear_sample(&src, &pos)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.37));
        for s in 2..=4 {
            let up = bicubic_resize(&src, s).unwrap();
            assert_eq!(up.shape(), (2, 5 * s, 3 * s));
            assert!(up.data().iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn catmull_rom_partition_of_unity() {
        for i in 0..50 {
            let f = i as f64 / 50.0;
            let s: f64 = (0..4)
                .map(|k| catmull_rom_weight(f - (k as f64 - 1.0)))
                .sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(catmull_rom_weight(0.0), 1.0);
        assert_eq!(catmull_rom_weight(1.0), 0.0);
        assert_eq!(catmull_rom_weight(2.0), 0.0);
    }
}
