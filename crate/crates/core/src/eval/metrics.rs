use crate::error::{Error, Result};
use crate::raster::{Raster, Real};

/// SSIM window side.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_dims<T: Real>(what: &str, a: &Raster<T>, b: &Raster<T>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Mean squared error over all channels and pixels, accumulated in f64.
pub fn mse<T: Real>(pred: &Raster<T>, reference: &Raster<T>) -> Result<f64> {
    check_dims("mse", pred, reference)?;
    if pred.is_empty() {
        return Err(Error::config("mse of an empty raster"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(reference.data())
        .map(|(p, r)| {
            let d = p.as_f64() - r.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `10·log10(1 / MSE)` for images in [0, 1]. Identical images give
/// `f64::INFINITY`.
pub fn psnr<T: Real>(pred: &Raster<T>, reference: &Raster<T>) -> Result<f64> {
    let m = mse(pred, reference)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    })
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..][..w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over valid window positions, computed per channel and
/// averaged. Dynamic range 1.
pub fn ssim<T: Real>(pred: &Raster<T>, reference: &Raster<T>) -> Result<f64> {
    check_dims("ssim", pred, reference)?;
    let (c, h, w) = pred.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW || c == 0 {
        return Err(Error::config(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let taps = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let x: Vec<f64> = pred.plane(ch).iter().map(|v| v.as_f64()).collect();
        let y: Vec<f64> = reference.plane(ch).iter().map(|v| v.as_f64()).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, h, w, &taps);
        let my = filter_valid(&y, h, w, &taps);
        let sxx = filter_valid(&xx, h, w, &taps);
        let syy = filter_valid(&yy, h, w, &taps);
        let sxy = filter_valid(&xy, h, w, &taps);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / c as f64)
}

/// Per-pixel, per-channel temporal standard deviation (population form),
/// averaged over the image and reported in 8-bit units.
pub fn pixel_std<T: Real>(frames: &[Raster<T>]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::config(format!(
            "pixel_std needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    for f in &frames[1..] {
        check_dims("pixel_std", &frames[0], f)?;
    }
    let n = frames.len() as f64;
    let len = frames[0].len();
    let mut total = 0.0;
    for i in 0..len {
        let mean = frames.iter().map(|f| f.data()[i].as_f64()).sum::<f64>() / n;
        let var = frames
            .iter()
            .map(|f| {
                let d = f.data()[i].as_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        total += var.sqrt();
    }
    Ok(255.0 * total / len as f64)
}
