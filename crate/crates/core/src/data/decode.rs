//! Depth packing and motion-vector conventions of the source dataset.

use log::warn;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::MotionField;

const B: f64 = 255.0;

/// `r/255 + g/255² + b/255³ + a/255⁴`, evaluated in 64-bit.
pub fn decode_depth_f64(r: u8, g: u8, b: u8, a: u8) -> f64 {
    r as f64 / B + g as f64 / (B * B) + b as f64 / (B * B * B) + a as f64 / (B * B * B * B)
}

pub fn decode_depth(r: u8, g: u8, b: u8, a: u8) -> f32 {
    decode_depth_f64(r, g, b, a) as f32
}

/// Remainder encoding: each byte is the integer part of the scaled residual,
/// so the decoded value truncates `depth` by less than 255⁻⁴. Values at or
/// above 1 encode as `(255, 0, 0, 0)`.
pub fn encode_depth(depth: f64) -> [u8; 4] {
    if depth.is_nan() || depth <= 0.0 {
        return [0; 4];
    }
    if depth >= 1.0 {
        return [255, 0, 0, 0];
    }
    let mut out = [0u8; 4];
    let mut rest = depth;
    for byte in &mut out {
        let scaled = rest * B;
        let digit = scaled.floor().min(254.0);
        *byte = digit as u8;
        rest = scaled - digit;
    }
    out
}

/// Axis and sign conventions of a raw motion-vector file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MotionConvention {
    /// Negate the vertical component after scaling.
    pub flip_y: bool,
    /// Negate both components at the end.
    pub negate: bool,
}

/// Converts raw normalized vectors (channel 0 vertical, channel 1
/// horizontal, both in [−1, 1]) to a backward-flow field in LR pixels.
/// Out-of-range values are clamped with a warning.
pub fn decode_motion(raw: &Raster, convention: MotionConvention) -> Result<MotionField> {
    if raw.channels() != 2 {
        return Err(Error::Format(format!(
            "raw motion needs 2 channels, got {}",
            raw.channels()
        )));
    }
    let (h, w) = (raw.height(), raw.width());
    let mut clamped = 0usize;
    let mut clamp = |v: f32| {
        if v.is_nan() {
            clamped += 1;
            0.0
        } else if !(-1.0..=1.0).contains(&v) {
            clamped += 1;
            v.clamp(-1.0, 1.0)
        } else {
            v
        }
    };
    let sign = if convention.negate { -1.0 } else { 1.0 };
    let sy = if convention.flip_y { -sign } else { sign };
    let mut out = Raster::zeros(2, h, w);
    for y in 0..h {
        for x in 0..w {
            let vertical = clamp(raw.get(0, y, x));
            let horizontal = clamp(raw.get(1, y, x));
            out.set(0, y, x, horizontal * w as f32 * sign);
            out.set(1, y, x, vertical * h as f32 * sy);
        }
    }
    if clamped > 0 {
        warn!("{clamped} motion values outside [-1, 1] were clamped");
    }
    MotionField::new(out)
}

/// Inverse of [`decode_motion`] for fields whose normalized values stay
/// within [−1, 1].
pub fn encode_motion(mv: &MotionField, convention: MotionConvention) -> Raster {
    let (h, w) = (mv.height(), mv.width());
    let sign = if convention.negate { -1.0 } else { 1.0 };
    let sy = if convention.flip_y { -sign } else { sign };
    Raster::from_fn(2, h, w, |c, y, x| {
        if c == 0 {
            mv.dy(y, x) / (h as f32 * sy)
        } else {
            mv.dx(y, x) / (w as f32 * sign)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_points() {
        assert_eq!(decode_depth(0, 0, 0, 0), 0.0);
        assert_eq!(decode_depth_f64(128, 0, 0, 0), 128.0 / 255.0);
        assert_eq!(encode_depth(0.0), [0; 4]);
        assert_eq!(encode_depth(1.0), [255, 0, 0, 0]);
        assert_eq!(decode_depth(255, 0, 0, 0), 1.0);
    }

    #[test]
    fn motion_scaling_and_flip() {
        let raw = Raster::from_vec(2, 1, 1, vec![0.5, 0.0]).unwrap();
        let conv = MotionConvention {
            flip_y: true,
            negate: false,
        };
        let raw = Raster::from_fn(2, 270, 1, |c, _, _| raw.get(c, 0, 0));
        let mv = decode_motion(&raw, conv).unwrap();
        assert_eq!(mv.dy(0, 0), -135.0);
        assert_eq!(mv.dx(0, 0), 0.0);
    }

    #[test]
    fn zero_raw_is_zero_field() {
        let mv = decode_motion(&Raster::zeros(2, 3, 4), MotionConvention::default()).unwrap();
        assert_eq!(mv, MotionField::zeros(3, 4));
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let raw = Raster::from_vec(2, 1, 2, vec![3.0, -0.5, 0.25, -7.0]).unwrap();
        let mv = decode_motion(&raw, MotionConvention::default()).unwrap();
        assert_eq!(mv.dy(0, 0), 1.0);
        assert_eq!(mv.dx(0, 1), -2.0);
    }
}
