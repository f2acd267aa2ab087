//! Converter from the source dataset's per-segment layout to manifests and
//! raster files.
//!
//! Expected input directory:
//!
//! ```text
//! camera.json                 {"near", "far", "fov", "frames": [{"jitter": [x, y]}, ...]}
//! <color modality>/*.png      8-bit RGB or RGBA
//! <depth modality>/*.png      8-bit RGBA packed depth
//! <motion modality>/*.qras    raw 2-channel vectors, vertical first, in [-1, 1]
//! Enhanced/*.png              optional HR targets
//! ```
//!
//! Frames are matched across modalities by file stem, in sorted order.
//! Jitter offsets are in LR pixels.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Deserialize;

use super::decode::{decode_depth, MotionConvention};
use super::manifest::{CameraIntrinsics, FrameRecord, MotionEncoding, SequenceManifest};
use super::rasterfile::{read_raster, write_raster};
use crate::error::{Error, Result};
use crate::raster::{Raster, Real};

/// Which texture-LOD variant of the LR modalities to import.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModalityBias {
    /// Mip bias −log2(S), the variant matched to the upscaling factor.
    #[default]
    Biased,
    /// Default texture LOD.
    Unbiased,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModalityNames {
    pub color: String,
    pub depth: String,
    pub motion: String,
    pub target: String,
}

/// Directory names of the jittered LR modalities for scale `scale`.
pub fn modality_names(scale: usize, bias: ModalityBias) -> Result<ModalityNames> {
    let tag = match (bias, scale) {
        (ModalityBias::Unbiased, 2..=4) => String::new(),
        (ModalityBias::Biased, 2) => "MipBiasMinus1".into(),
        (ModalityBias::Biased, 3) => "MipBiasMinus1.58".into(),
        (ModalityBias::Biased, 4) => "MipBiasMinus2".into(),
        _ => {
            return Err(Error::config(format!(
                "no dataset modalities for scale {scale}"
            )))
        }
    };
    Ok(ModalityNames {
        color: format!("{tag}Jittered"),
        depth: format!("Depth{tag}Jittered"),
        motion: format!("MotionVectors{tag}Jittered"),
        target: "Enhanced".into(),
    })
}

#[derive(Clone, Debug)]
pub struct ImportOptions {
    pub scale: usize,
    pub bias: ModalityBias,
    pub convention: MotionConvention,
    pub scene: String,
    pub segment: u32,
    pub fps: f32,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JitterValue {
    Pair([f32; 2]),
    Named { x: f32, y: f32 },
}

#[derive(Deserialize)]
struct CameraFrame {
    jitter: JitterValue,
}

#[derive(Deserialize)]
struct CameraFile {
    near: f32,
    far: f32,
    fov: f32,
    frames: Vec<CameraFrame>,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

fn open_png(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::data(path, e.to_string()))
}

/// 8-bit color PNG as a 3-channel raster in [0, 1].
pub fn read_color_png(path: &Path) -> Result<Raster> {
    let img = open_png(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Raster::from_fn(3, h, w, |c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

/// Writes the first three channels as an 8-bit RGB PNG, clamping to [0, 1].
pub fn write_color_png<T: Real>(raster: &Raster<T>, path: &Path) -> Result<()> {
    if raster.channels() < 3 {
        return Err(Error::config(format!(
            "PNG output needs 3 channels, got {}",
            raster.channels()
        )));
    }
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        let px = |c| {
            (raster
                .get(c, y as usize, x as usize)
                .as_f64()
                .clamp(0.0, 1.0)
                * 255.0)
                .round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::data(path, e.to_string()))
}

/// RGBA-packed depth PNG as a 1-channel raster.
pub fn read_depth_png(path: &Path) -> Result<Raster> {
    let img = open_png(path)?;
    if !img.color().has_alpha() {
        return Err(Error::data(path, "packed depth needs an RGBA image"));
    }
    let img = img.to_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Raster::from_fn(1, h, w, |_, y, x| {
        let p = img.get_pixel(x as u32, y as u32);
        decode_depth(p[0], p[1], p[2], p[3])
    }))
}

/// Converts one segment directory; returns the written manifest path.
pub fn import_qrisp(src: &Path, dst: &Path, options: &ImportOptions) -> Result<PathBuf> {
    let names = modality_names(options.scale, options.bias)?;
    let camera_path = src.join("camera.json");
    let camera_text = fs::read_to_string(&camera_path).map_err(|e| Error::io(&camera_path, e))?;
    let camera: CameraFile =
        serde_json::from_str(&camera_text).map_err(|e| Error::data(&camera_path, e.to_string()))?;

    let colors = sorted_files(&src.join(&names.color), "png")?;
    let target_dir = src.join(&names.target);
    let with_targets = target_dir.is_dir();
    if colors.len() != camera.frames.len() {
        return Err(Error::data(
            &camera_path,
            format!(
                "{} camera frames but {} color files",
                camera.frames.len(),
                colors.len()
            ),
        ));
    }
    let frames_dir = dst.join("frames");
    let mut records = Vec::with_capacity(colors.len());
    for (i, color_path) in colors.iter().enumerate() {
        let stem = color_path
            .file_stem()
            .unwrap()
            .to_string_lossy()
            .into_owned();
        let depth_path = src.join(&names.depth).join(format!("{stem}.png"));
        let motion_path = src.join(&names.motion).join(format!("{stem}.qras"));
        let color = read_color_png(color_path)?;
        let depth = read_depth_png(&depth_path)?;
        let motion = read_raster(&motion_path)?;
        let dims = (color.height(), color.width());
        for (p, r) in [(&depth_path, &depth), (&motion_path, &motion)] {
            if (r.height(), r.width()) != dims {
                return Err(Error::data(
                    p,
                    format!("frame {stem}: size differs from color"),
                ));
            }
        }
        let rel = |kind: &str| format!("frames/{kind}_{i:05}.qras");
        write_raster(&dst.join(rel("color")), &color)?;
        write_raster(&dst.join(rel("depth")), &depth)?;
        write_raster(&dst.join(rel("motion")), &motion)?;
        let target = if with_targets {
            let t = read_color_png(&target_dir.join(format!("{stem}.png")))?;
            if (t.height(), t.width()) != (dims.0 * options.scale, dims.1 * options.scale) {
                return Err(Error::data(
                    &target_dir.join(format!("{stem}.png")),
                    format!("target is not {}x the LR size", options.scale),
                ));
            }
            write_raster(&dst.join(rel("target")), &t)?;
            Some(rel("target"))
        } else {
            None
        };
        let jitter = match camera.frames[i].jitter {
            JitterValue::Pair(p) => p,
            JitterValue::Named { x, y } => [x, y],
        };
        records.push(FrameRecord {
            index: Some(i),
            color: rel("color"),
            depth: rel("depth"),
            motion: rel("motion"),
            target,
            jitter,
        });
    }
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let manifest = SequenceManifest {
        scene: options.scene.clone(),
        segment: options.segment,
        fps: options.fps,
        scale: options.scale,
        camera: CameraIntrinsics {
            near: camera.near,
            far: camera.far,
            fov: camera.fov,
        },
        motion: MotionEncoding::Normalized {
            flip_y: options.convention.flip_y,
            negate: options.convention.negate,
        },
        static_ranges: Vec::new(),
        frames: records,
    };
    let path = dst.join("manifest.json");
    manifest.write(&path)?;
    info!(
        "imported {} frames from {} into {}",
        manifest.frames.len(),
        src.display(),
        path.display()
    );
    Ok(path)
}
