//! Dense C×H×W rasters and the small numerical engine built on them.
//!
//! Everything the reconstruction network needs lives here: 3×3 convolution,
//! pointwise activations, pixel shuffles, bilinear and bicubic resampling,
//! dense layers, a reverse-mode [`Tape`] and an [`Adam`] optimizer. Values
//! are stored channel-major then row-major (`c·H·W + y·W + x`).
//!
//! All kernels are generic over [`Real`], so the same code path runs in
//! `f32` for training and inference and in `f64` for gradient checks.

mod adam;
mod conv;
mod dense;
mod gemm;
mod param;
mod sample;
mod shuffle;
mod tape;

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use conv::{conv3x3, ConvKernel};
pub use dense::{dense_forward, Activation, DenseLayer};
pub use param::{Param, ParamStore};
pub use sample::{bicubic_resize, bilinear_sample, catmull_rom_weight};
pub use shuffle::{depth_to_space, space_to_depth};
pub use tape::{Gradients, Tape, Var};

pub(crate) use dense::dense_rows;
pub(crate) use tape::{blend_values, l1_value};

/// Scalar type the engine runs on.
pub trait Real:
    Float + Default + Debug + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a·b + beta·c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_rs: isize,
        a_cs: isize,
        b: &[Self],
        b_rs: isize,
        b_cs: isize,
        beta: Self,
        c: &mut [Self],
        c_rs: isize,
    );
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        a_rs: isize,
        a_cs: isize,
        b: &[f32],
        b_rs: isize,
        b_cs: isize,
        beta: f32,
        c: &mut [f32],
        c_rs: isize,
    ) {
        // SAFETY: callers in `gemm` check every slice against its strides.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_rs,
                a_cs,
                b.as_ptr(),
                b_rs,
                b_cs,
                beta,
                c.as_mut_ptr(),
                c_rs,
                1,
            )
        }
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        a_rs: isize,
        a_cs: isize,
        b: &[f64],
        b_rs: isize,
        b_cs: isize,
        beta: f64,
        c: &mut [f64],
        c_rs: isize,
    ) {
        // SAFETY: callers in `gemm` check every slice against its strides.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_rs,
                a_cs,
                b.as_ptr(),
                b_rs,
                b_cs,
                beta,
                c.as_mut_ptr(),
                c_rs,
                1,
            )
        }
    }
}

/// A `channels × height × width` grid of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Raster<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Raster {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds a raster, checking the length and that every value is finite.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let raster = Self::from_vec_unchecked(channels, height, width, data)?;
        if let Some(index) = raster.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(raster)
    }

    /// Builds a raster checking only the length.
    pub fn from_vec_unchecked(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::config(format!(
                "raster data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Raster {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Raster {
            channels,
            height,
            width,
            data,
        }
    }

    /// A `1×1×n` raster holding a flat vector.
    pub fn vector(data: Vec<T>) -> Self {
        let n = data.len();
        Raster {
            channels: 1,
            height: 1,
            width: n,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Raster {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Raster<U> {
        Raster {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn same_shape(&self, other: &Raster<T>) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks rasters of equal spatial size along the channel axis.
    pub fn concat(parts: &[&Raster<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("concat of zero rasters"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::config(format!(
                    "concat spatial mismatch: {}x{} vs {h}x{w}",
                    p.height, p.width
                )));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Raster {
            channels,
            height: h,
            width: w,
            data,
        })
    }

    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.channels {
            return Err(Error::config(format!(
                "channel slice {start}..{} out of {}",
                start + count,
                self.channels
            )));
        }
        let n = self.plane_len();
        Ok(Raster {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Copies the window `[y0, y0+h) × [x0, x0+w)` of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::config(format!(
                "crop {h}x{w}+{y0}+{x0} exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Raster::from_fn(self.channels, h, w, |c, y, x| {
            self.get(c, y0 + y, x0 + x)
        }))
    }
}

pub fn relu<T: Real>(input: &Raster<T>) -> Raster<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Real>(input: &Raster<T>) -> Raster<T> {
    input.map(sigmoid_scalar)
}

/// Logistic function evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length_and_nan() {
        assert!(Raster::<f32>::from_vec(1, 2, 2, vec![0.0; 3]).is_err());
        let err = Raster::<f32>::from_vec(1, 1, 2, vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
        assert!(Raster::<f32>::from_vec(1, 1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn relu_and_sigmoid_points() {
        let r = Raster::vector(vec![-1.0f32, 2.0, 0.0]);
        assert_eq!(relu(&r).data(), &[0.0, 2.0, 0.0]);
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        let hi = sigmoid_scalar(30.0f32);
        let lo = sigmoid_scalar(-30.0f32);
        // 1/(1+e^-30) and e^-30/(1+e^-30) from a 64-bit reference.
        assert!((hi as f64 - 1.0 / (1.0 + (-30f64).exp())).abs() < 1e-7);
        assert!((lo as f64 - (-30f64).exp() / (1.0 + (-30f64).exp())).abs() < 1e-18);
        assert!(lo > 0.0 && hi <= 1.0 && hi.is_finite());
        assert!(sigmoid_scalar(-1000.0f64) >= 0.0 && sigmoid_scalar(1000.0f64) == 1.0);
    }

    #[test]
    fn relu_is_idempotent() {
        let r = Raster::vector(vec![-3.0f32, -0.1, 0.0, 0.2, 5.0]);
        assert_eq!(relu(&relu(&r)), relu(&r));
    }

    #[test]
    fn concat_and_slice() {
        let a = Raster::<f32>::filled(1, 2, 2, 1.0);
        let b = Raster::<f32>::filled(2, 2, 2, 2.0);
        let c = Raster::concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (3, 2, 2));
        assert_eq!(c.slice_channels(1, 2).unwrap(), b);
        assert!(Raster::concat(&[&a, &Raster::zeros(1, 3, 2)]).is_err());
    }
}
