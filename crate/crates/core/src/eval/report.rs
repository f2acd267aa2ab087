use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::{pixel_std, psnr, ssim};
use crate::data::{read_manifest_list, write_color_png, FrameBundle, Sequence};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model};
use crate::raster::{bicubic_resize, Raster};

/// Something that turns an LR sequence into HR frames.
pub enum Upscaler {
    Model(Box<Model>),
    Bicubic {
        scale: usize,
    },
    /// Returns the HR targets; a perfect reference for sanity checks.
    Oracle {
        scale: usize,
    },
}

impl Upscaler {
    pub fn scale(&self) -> usize {
        match self {
            Upscaler::Model(m) => m.config.scale,
            Upscaler::Bicubic { scale } | Upscaler::Oracle { scale } => *scale,
        }
    }

    /// HR outputs clamped to [0, 1].
    pub fn rollout(&self, frames: &[FrameBundle]) -> Result<Vec<Raster>> {
        let out = match self {
            Upscaler::Model(m) => m.rollout(frames)?,
            Upscaler::Bicubic { scale } => frames
                .iter()
                .map(|f| bicubic_resize(&f.lr_color, *scale))
                .collect::<Result<_>>()?,
            Upscaler::Oracle { .. } => frames
                .iter()
                .map(|f| {
                    f.hr_target
                        .clone()
                        .ok_or_else(|| Error::config("oracle upscaler needs HR targets"))
                })
                .collect::<Result<_>>()?,
        };
        Ok(out
            .into_iter()
            .map(|r| r.map(|v| v.clamp(0.0, 1.0)))
            .collect())
    }
}

/// One evaluation segment.
#[derive(Clone, Debug)]
pub struct EvalSegment {
    pub scene: String,
    pub segment: u32,
    pub frames: Vec<FrameBundle>,
    /// Half-open frame ranges without motion.
    pub static_ranges: Vec<[usize; 2]>,
}

impl EvalSegment {
    pub fn load(manifest: &Path, scale: usize) -> Result<Self> {
        let seq = Sequence::open(manifest)?;
        Ok(EvalSegment {
            scene: seq.manifest.scene.clone(),
            segment: seq.manifest.segment,
            static_ranges: seq.manifest.static_ranges.clone(),
            frames: seq.load_all(scale)?,
        })
    }
}

/// Metrics of one segment. PSNR and SSIM are means over frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRow {
    pub scene: String,
    pub segment: u32,
    pub frames: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Mean pixel std over the static ranges, in 8-bit units.
    pub pixel_std: Option<f64>,
    /// Frames covered by `pixel_std`.
    pub static_frames: usize,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

/// Frame-weighted means over all rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub frames: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Weighted by static frames.
    pub pixel_std: Option<f64>,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<SegmentRow>,
    pub aggregate: Aggregate,
    /// Written comparison crops.
    pub crops: Vec<PathBuf>,
}

pub const REPORT_HEADER: &str =
    "scene,segment,frames,psnr,ssim,pixel_std,baseline_psnr,baseline_ssim";

/// Notes written next to every report.
pub const REPORT_NOTES: &str = "\
pixel_std is the per-pixel temporal standard deviation over declared static ranges, in 8-bit units (x255); the 8-bit scale is an assumption.
PSNR of identical images is reported as inf.
LPIPS is not computed: it needs pretrained perceptual network weights.
";

/// Evaluation switches.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Directory for the CSV report, notes and crops.
    pub output_dir: Option<PathBuf>,
    /// Side of the HR comparison crops; 0 disables them.
    pub crop_size: usize,
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn parse(field: &str) -> Result<f64> {
    match field {
        "inf" => Ok(f64::INFINITY),
        _ => field
            .parse()
            .map_err(|_| Error::Format(format!("report value {field:?}"))),
    }
}

impl EvalReport {
    pub fn aggregate(rows: &[SegmentRow]) -> Aggregate {
        let frames: usize = rows.iter().map(|r| r.frames).sum();
        let weighted = |f: &dyn Fn(&SegmentRow) -> f64| {
            rows.iter().map(|r| f(r) * r.frames as f64).sum::<f64>() / frames.max(1) as f64
        };
        let static_frames: usize = rows
            .iter()
            .filter(|r| r.pixel_std.is_some())
            .map(|r| r.static_frames)
            .sum();
        let pixel_std = (static_frames > 0).then(|| {
            rows.iter()
                .filter_map(|r| r.pixel_std.map(|p| p * r.static_frames as f64))
                .sum::<f64>()
                / static_frames as f64
        });
        Aggregate {
            frames,
            psnr: weighted(&|r| r.psnr),
            ssim: weighted(&|r| r.ssim),
            pixel_std,
            baseline_psnr: weighted(&|r| r.baseline_psnr),
            baseline_ssim: weighted(&|r| r.baseline_ssim),
        }
    }

    /// One line per segment; the aggregate is not included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scene,
                r.segment,
                r.frames,
                fmt(r.psnr),
                fmt(r.ssim),
                r.pixel_std.map(fmt).unwrap_or_default(),
                fmt(r.baseline_psnr),
                fmt(r.baseline_ssim)
            );
        }
        out
    }

    /// Parses rows written by [`EvalReport::to_csv`]. The static frame count
    /// is not stored, so rows with a pixel std count all their frames.
    pub fn parse_csv(text: &str) -> Result<Vec<SegmentRow>> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Format("report header".into()));
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 8 {
                    return Err(Error::Format(format!("report row {line:?}")));
                }
                let frames: usize = f[2]
                    .parse()
                    .map_err(|_| Error::Format(format!("report row {line:?}")))?;
                let pixel_std = if f[5].is_empty() {
                    None
                } else {
                    Some(parse(f[5])?)
                };
                Ok(SegmentRow {
                    scene: f[0].to_string(),
                    segment: f[1]
                        .parse()
                        .map_err(|_| Error::Format(format!("report row {line:?}")))?,
                    frames,
                    psnr: parse(f[3])?,
                    ssim: parse(f[4])?,
                    pixel_std,
                    static_frames: if pixel_std.is_some() { frames } else { 0 },
                    baseline_psnr: parse(f[6])?,
                    baseline_ssim: parse(f[7])?,
                })
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        let a = &self.aggregate;
        let mut s = format!(
            "frames {}: PSNR {} dB (bicubic {}), SSIM {} (bicubic {})",
            a.frames,
            fmt(a.psnr),
            fmt(a.baseline_psnr),
            fmt(a.ssim),
            fmt(a.baseline_ssim)
        );
        if let Some(p) = a.pixel_std {
            let _ = write!(s, ", static pixel std {}", fmt(p));
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Side-by-side bicubic | upscaler | target crop around the image center.
fn comparison_crop(
    baseline: &Raster,
    output: &Raster,
    target: &Raster,
    size: usize,
) -> Result<Raster> {
    let (h, w) = (target.height(), target.width());
    let side = size.min(h).min(w);
    let (y0, x0) = ((h - side) / 2, (w - side) / 2);
    let parts = [baseline, output, target]
        .iter()
        .map(|r| r.slice_channels(0, 3)?.crop(y0, x0, side, side))
        .collect::<Result<Vec<_>>>()?;
    let gap = 2;
    let mut out = Raster::filled(3, side, 3 * side + 2 * gap, 1.0);
    for (k, p) in parts.iter().enumerate() {
        for c in 0..3 {
            for y in 0..side {
                for x in 0..side {
                    out.set(c, y, k * (side + gap) + x, p.get(c, y, x));
                }
            }
        }
    }
    Ok(out)
}

fn evaluate_segment(
    upscaler: &Upscaler,
    seg: &EvalSegment,
    options: &EvalOptions,
) -> Result<(SegmentRow, Option<PathBuf>)> {
    let scale = upscaler.scale();
    let outputs = upscaler.rollout(&seg.frames)?;
    let baseline = Upscaler::Bicubic { scale }.rollout(&seg.frames)?;
    let mut p = Vec::new();
    let mut s = Vec::new();
    let mut bp = Vec::new();
    let mut bs = Vec::new();
    for ((y, b), f) in outputs.iter().zip(&baseline).zip(&seg.frames) {
        let t = f.hr_target.as_ref().ok_or_else(|| {
            Error::config(format!(
                "{} segment {}: frame without HR target",
                seg.scene, seg.segment
            ))
        })?;
        p.push(psnr(y, t)?);
        s.push(ssim(y, t)?);
        bp.push(psnr(b, t)?);
        bs.push(ssim(b, t)?);
    }
    let mut stds = Vec::new();
    let mut static_frames = 0;
    for &[a, b] in &seg.static_ranges {
        let b = b.min(outputs.len());
        if b >= a + 2 {
            stds.push((pixel_std(&outputs[a..b])?, b - a));
            static_frames += b - a;
        }
    }
    let pixel_std = (static_frames > 0)
        .then(|| stds.iter().map(|(v, n)| v * *n as f64).sum::<f64>() / static_frames as f64);
    let crop = match &options.output_dir {
        Some(dir) if options.crop_size > 0 && !outputs.is_empty() => {
            let mid = outputs.len() / 2;
            let target = seg.frames[mid].hr_target.as_ref().expect("checked above");
            let img = comparison_crop(&baseline[mid], &outputs[mid], target, options.crop_size)?;
            let path = dir.join(format!("crop_{}_{:02}.png", seg.scene, seg.segment));
            write_color_png(&img, &path)?;
            Some(path)
        }
        _ => None,
    };
    Ok((
        SegmentRow {
            scene: seg.scene.clone(),
            segment: seg.segment,
            frames: seg.frames.len(),
            psnr: mean(&p),
            ssim: mean(&s),
            pixel_std,
            static_frames,
            baseline_psnr: mean(&bp),
            baseline_ssim: mean(&bs),
        },
        crop,
    ))
}

/// Full-sequence rollouts on every segment, compared with the HR targets
/// and with bicubic upscaling of the same frames.
pub fn evaluate(
    upscaler: &Upscaler,
    segments: &[EvalSegment],
    options: &EvalOptions,
) -> Result<EvalReport> {
    if let Some(dir) = &options.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let results: Vec<(SegmentRow, Option<PathBuf>)> = segments
        .par_iter()
        .map(|seg| evaluate_segment(upscaler, seg, options))
        .collect::<Result<_>>()?;
    let (rows, crops): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = EvalReport {
        aggregate: EvalReport::aggregate(&rows),
        rows,
        crops: crops.into_iter().flatten().collect(),
    };
    if let Some(dir) = &options.output_dir {
        let csv = dir.join("report.csv");
        fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let notes = dir.join("notes.txt");
        let text = format!("{}\n{REPORT_NOTES}", report.summary());
        fs::write(&notes, text).map_err(|e| Error::io(&notes, e))?;
    }
    Ok(report)
}

/// Loads every segment of a manifest list.
pub fn load_segments(list: &Path, scale: usize) -> Result<Vec<EvalSegment>> {
    read_manifest_list(list)?
        .iter()
        .map(|m| EvalSegment::load(m, scale))
        .collect()
}

/// Evaluates a checkpoint on the segments of a manifest list.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    list: &Path,
    scale: usize,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let model = Checkpoint::read(checkpoint)?.model()?;
    if model.config.scale != scale {
        return Err(Error::config(format!(
            "checkpoint is for {}x, evaluation asked for {scale}x",
            model.config.scale
        )));
    }
    let segments = load_segments(list, scale)?;
    evaluate(&Upscaler::Model(Box::new(model)), &segments, options)
}
