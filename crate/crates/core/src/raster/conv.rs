use super::gemm::{gemm, MatRef};
use super::{Raster, Real};
use crate::error::{Error, Result};

/// Weights of a 3×3 convolution with zero padding of one pixel.
///
/// `taps` is laid out `(out, in, dy, dx)`. The flat form used by kernel
/// prediction and the tape is `taps` followed by `bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T = f32> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub taps: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        taps: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if taps.len() != out_channels * in_channels * 9 || bias.len() != out_channels {
            return Err(Error::config(format!(
                "conv kernel {out_channels}x{in_channels}: got {} taps and {} biases",
                taps.len(),
                bias.len()
            )));
        }
        Ok(ConvKernel {
            out_channels,
            in_channels,
            taps,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        ConvKernel {
            out_channels,
            in_channels,
            taps: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Center tap 1 on matching channels, so the convolution is the identity.
    pub fn identity(channels: usize) -> Self {
        let mut k = Self::zeros(channels, channels);
        for c in 0..channels {
            k.taps[(c * channels + c) * 9 + 4] = T::one();
        }
        k
    }

    pub fn flat_len(out_channels: usize, in_channels: usize) -> usize {
        out_channels * in_channels * 9 + out_channels
    }

    pub fn from_flat(out_channels: usize, in_channels: usize, flat: &[T]) -> Result<Self> {
        if flat.len() != Self::flat_len(out_channels, in_channels) {
            return Err(Error::config(format!(
                "flat kernel length {} does not fit {out_channels}x{in_channels}",
                flat.len()
            )));
        }
        let split = out_channels * in_channels * 9;
        Ok(ConvKernel {
            out_channels,
            in_channels,
            taps: flat[..split].to_vec(),
            bias: flat[split..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut flat = self.taps.clone();
        flat.extend_from_slice(&self.bias);
        flat
    }

    #[inline]
    pub fn tap(&self, o: usize, c: usize, dy: usize, dx: usize) -> T {
        self.taps[((o * self.in_channels + c) * 3 + dy) * 3 + dx]
    }
}

pub fn conv3x3<T: Real>(input: &Raster<T>, kernel: &ConvKernel<T>) -> Result<Raster<T>> {
    if kernel.in_channels != input.channels() {
        return Err(Error::config(format!(
            "conv3x3 expects {} input channels, got {}",
            kernel.in_channels,
            input.channels()
        )));
    }
    Ok(conv_forward(
        input,
        &kernel.taps,
        &kernel.bias,
        kernel.out_channels,
    ))
}

/// Unfolds each 3×3 neighbourhood into a column: `(in·9) × (H·W)`.
fn im2col<T: Real>(input: &Raster<T>) -> Vec<T> {
    let (c_in, h, w) = input.shape();
    let hw = h * w;
    let mut cols = vec![T::zero(); c_in * 9 * hw];
    for c in 0..c_in {
        let plane = input.plane(c);
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut cols[((c * 9) + dy * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match dx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Adds each column back onto the neighbourhood it came from.
fn col2im<T: Real>(cols: &[T], c_in: usize, h: usize, w: usize) -> Raster<T> {
    let hw = h * w;
    let mut out = Raster::zeros(c_in, h, w);
    for c in 0..c_in {
        let plane = out.plane_mut(c);
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &cols[((c * 9) + dy * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match dx {
                        0 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += *s;
                            }
                        }
                        1 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_forward<T: Real>(
    input: &Raster<T>,
    taps: &[T],
    bias: &[T],
    out_channels: usize,
) -> Raster<T> {
    let (c_in, h, w) = input.shape();
    let hw = h * w;
    let mut out = Raster::zeros(out_channels, h, w);
    if hw == 0 {
        return out;
    }
    for (o, b) in bias.iter().enumerate() {
        out.plane_mut(o).fill(*b);
    }
    let cols = im2col(input);
    gemm(
        MatRef::new(taps, out_channels, c_in * 9),
        MatRef::new(&cols, c_in * 9, hw),
        T::one(),
        out.data_mut(),
    );
    out
}

/// Vector-Jacobian products of the convolution.
///
/// Returns the input gradient (when requested) and the gradient of the
/// flat `taps ++ bias` kernel.
pub(crate) fn conv_backward<T: Real>(
    input: &Raster<T>,
    taps: &[T],
    out_channels: usize,
    grad_out: &Raster<T>,
    need_input: bool,
) -> (Option<Raster<T>>, Vec<T>) {
    let (c_in, h, w) = input.shape();
    let hw = h * w;
    let k = c_in * 9;
    let mut grad_flat = vec![T::zero(); out_channels * k + out_channels];
    if hw == 0 {
        return (need_input.then(|| Raster::zeros(c_in, h, w)), grad_flat);
    }
    let cols = im2col(input);
    let (grad_taps, grad_bias) = grad_flat.split_at_mut(out_channels * k);
    gemm(
        MatRef::new(grad_out.data(), out_channels, hw),
        MatRef::new(&cols, k, hw).t(),
        T::zero(),
        grad_taps,
    );
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb = grad_out.plane(o).iter().copied().sum();
    }
    let grad_in = need_input.then(|| {
        let mut dcols = vec![T::zero(); k * hw];
        gemm(
            MatRef::new(taps, out_channels, k).t(),
            MatRef::new(grad_out.data(), out_channels, hw),
            T::zero(),
            &mut dcols,
        );
        col2im(&dcols, c_in, h, w)
    });
    (grad_in, grad_flat)
}
