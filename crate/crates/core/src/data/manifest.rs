//! Per-segment JSON manifests and the sequence loader.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::decode::{decode_motion, MotionConvention};
use super::jitter::JITTER_PERIOD;
use super::rasterfile::read_raster;
use super::FrameBundle;
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::{JitterOffset, MotionField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub near: f32,
    pub far: f32,
    /// Vertical field of view in degrees.
    pub fov: f32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            near: 0.1,
            far: 1000.0,
            fov: 60.0,
        }
    }
}

/// How the motion files of a sequence are stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum MotionEncoding {
    /// Backward flow in LR pixels, horizontal channel first.
    #[default]
    Pixels,
    /// Raw normalized vectors, vertical channel first, decoded with
    /// [`decode_motion`].
    Normalized { flip_y: bool, negate: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub color: String,
    pub depth: String,
    pub motion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub jitter: [f32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub scene: String,
    pub segment: u32,
    pub fps: f32,
    pub scale: usize,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub motion: MotionEncoding,
    /// Half-open frame ranges during which nothing in view moves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub static_ranges: Vec<[usize; 2]>,
    pub frames: Vec<FrameRecord>,
}

impl SequenceManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SequenceManifest =
            serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))?;
        manifest.validate().map_err(|e| Error::data(path, e))?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(2..=4).contains(&self.scale) {
            return Err(format!("scale {} not in 2..=4", self.scale));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(index) = f.index {
                let first = self.frames[0].index.unwrap_or(0);
                if index != first + i {
                    return Err(format!("frame indices not contiguous at position {i}"));
                }
            }
            JitterOffset::new(f.jitter[0], f.jitter[1]).map_err(|e| format!("frame {i}: {e}"))?;
        }
        for r in &self.static_ranges {
            if r[0] >= r[1] || r[1] > self.frames.len() {
                return Err(format!(
                    "static range {r:?} outside 0..{}",
                    self.frames.len()
                ));
            }
        }
        let aperiodic = (JITTER_PERIOD..self.frames.len())
            .any(|i| self.frames[i].jitter != self.frames[i - JITTER_PERIOD].jitter);
        if aperiodic {
            warn!(
                "{} segment {}: jitter offsets do not repeat with period {JITTER_PERIOD}",
                self.scene, self.segment
            );
        }
        Ok(())
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub manifest: SequenceManifest,
    pub base_dir: PathBuf,
}

impl Sequence {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = SequenceManifest::read(manifest_path)?;
        let base_dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Sequence { manifest, base_dir })
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Decodes one frame into canonical conventions.
    pub fn load_frame(&self, i: usize, scale: usize) -> Result<FrameBundle> {
        let m = &self.manifest;
        if m.scale != scale {
            return Err(Error::config(format!(
                "{} segment {} was prepared for scale {}, requested {scale}",
                m.scene, m.segment, m.scale
            )));
        }
        let rec = &m.frames[i];
        let load = |modality: &str, rel: &str, channels: usize| -> Result<Raster> {
            let path = self.base_dir.join(rel);
            let r = read_raster(&path)
                .map_err(|e| Error::data(&path, format!("frame {i} {modality}: {e}")))?;
            if r.channels() != channels {
                return Err(Error::data(
                    &path,
                    format!(
                        "frame {i} {modality}: expected {channels} channels, got {}",
                        r.channels()
                    ),
                ));
            }
            if !r.is_finite() {
                return Err(Error::data(
                    &path,
                    format!("frame {i} {modality}: non-finite values"),
                ));
            }
            Ok(r)
        };
        let lr_color = load("color", &rec.color, 3)?;
        let lr_depth = load("depth", &rec.depth, 1)?;
        let raw_motion = load("motion", &rec.motion, 2)?;
        let (h, w) = (lr_color.height(), lr_color.width());
        let mismatch = |modality: &str, rel: &str, got: (usize, usize), want: (usize, usize)| {
            Error::data(
                &self.base_dir.join(rel),
                format!(
                    "frame {i} {modality}: {}x{} does not match {}x{}",
                    got.0, got.1, want.0, want.1
                ),
            )
        };
        for (name, rel, r) in [
            ("depth", &rec.depth, &lr_depth),
            ("motion", &rec.motion, &raw_motion),
        ] {
            if (r.height(), r.width()) != (h, w) {
                return Err(mismatch(name, rel, (r.height(), r.width()), (h, w)));
            }
        }
        if lr_depth.data().iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::data(
                &self.base_dir.join(&rec.depth),
                format!("frame {i} depth: values outside [0, 1]"),
            ));
        }
        let lr_motion = match m.motion {
            MotionEncoding::Pixels => MotionField::new(raw_motion)?,
            MotionEncoding::Normalized { flip_y, negate } => {
                decode_motion(&raw_motion, MotionConvention { flip_y, negate })?
            }
        };
        let hr_target = match &rec.target {
            Some(rel) => {
                let t = load("target", rel, 3)?;
                if (t.height(), t.width()) != (h * scale, w * scale) {
                    return Err(mismatch(
                        "target",
                        rel,
                        (t.height(), t.width()),
                        (h * scale, w * scale),
                    ));
                }
                Some(t)
            }
            None => None,
        };
        Ok(FrameBundle {
            lr_color,
            lr_depth,
            lr_motion,
            jitter: JitterOffset::new(rec.jitter[0], rec.jitter[1])?,
            hr_target,
        })
    }

    /// Frames in order, decoded lazily.
    pub fn frames(&self, scale: usize) -> impl Iterator<Item = Result<FrameBundle>> + '_ {
        (0..self.len()).map(move |i| self.load_frame(i, scale))
    }

    pub fn load_all(&self, scale: usize) -> Result<Vec<FrameBundle>> {
        self.frames(scale).collect()
    }
}

/// Opens a manifest and decodes all of its frames.
pub fn load_sequence(manifest_path: &Path, scale: usize) -> Result<Vec<FrameBundle>> {
    Sequence::open(manifest_path)?.load_all(scale)
}

/// A JSON list of manifest paths, relative to the list file.
pub fn read_manifest_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rel: Vec<String> =
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(rel.into_iter().map(|r| base.join(r)).collect())
}

pub fn write_manifest_list(path: &Path, manifests: &[String]) -> Result<()> {
    let text = serde_json::to_string_pretty(manifests).expect("list serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
