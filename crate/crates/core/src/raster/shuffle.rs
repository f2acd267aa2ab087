use super::{Raster, Real};
use crate::error::{Error, Result};

/// Pixel shuffle: `out(c, y·S+dy, x·S+dx) = in(c·S² + dy·S + dx, y, x)`.
pub fn depth_to_space<T: Real>(input: &Raster<T>, scale: usize) -> Result<Raster<T>> {
    let (c, h, w) = input.shape();
    let s2 = scale * scale;
    if scale == 0 || c % s2 != 0 {
        return Err(Error::config(format!(
            "depth_to_space: {c} channels not divisible by {scale}^2"
        )));
    }
    let oc = c / s2;
    let (oh, ow) = (h * scale, w * scale);
    let mut out = Raster::zeros(oc, oh, ow);
    let dst = out.data_mut();
    for co in 0..oc {
        for dy in 0..scale {
            for dx in 0..scale {
                let src = input.plane(co * s2 + dy * scale + dx);
                for y in 0..h {
                    let row = (co * oh + y * scale + dy) * ow;
                    for x in 0..w {
                        dst[row + x * scale + dx] = src[y * w + x];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`depth_to_space`] with the same channel ordering.
pub fn space_to_depth<T: Real>(input: &Raster<T>, scale: usize) -> Result<Raster<T>> {
    let (c, h, w) = input.shape();
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::config(format!(
            "space_to_depth: {h}x{w} not divisible by {scale}"
        )));
    }
    let s2 = scale * scale;
    let (oh, ow) = (h / scale, w / scale);
    let mut out = Raster::zeros(c * s2, oh, ow);
    let src = input.data();
    for ci in 0..c {
        for dy in 0..scale {
            for dx in 0..scale {
                let dst = out.plane_mut(ci * s2 + dy * scale + dx);
                for y in 0..oh {
                    let row = (ci * h + y * scale + dy) * w;
                    for x in 0..ow {
                        dst[y * ow + x] = src[row + x * scale + dx];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_ordering() {
        let x = Raster::from_vec(4, 1, 1, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let y = depth_to_space(&x, 2).unwrap();
        assert_eq!(y.shape(), (1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(space_to_depth(&y, 2).unwrap(), x);
    }

    #[test]
    fn scale_one_is_identity() {
        let x = Raster::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as f32);
        assert_eq!(depth_to_space(&x, 1).unwrap(), x);
        assert_eq!(space_to_depth(&x, 1).unwrap(), x);
    }

    #[test]
    fn rejects_indivisible_shapes() {
        assert!(depth_to_space(&Raster::<f32>::zeros(6, 2, 2), 2).is_err());
        assert!(space_to_depth(&Raster::<f32>::zeros(1, 3, 4), 2).is_err());
    }
}
