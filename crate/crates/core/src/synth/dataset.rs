//! Seeded multi-scene datasets written as manifests and raster files.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::texture::{random_color, Texture};
use super::{
    render_sequence, GroundTruthFrame, JitterMode, Prefilter, SceneSpec, Shape, Sprite,
    SYNTH_MOTION,
};
use crate::data::{
    write_manifest_list, write_raster, CameraIntrinsics, FrameRecord, MotionEncoding,
    SequenceManifest,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scenes: usize,
    pub frames_per_scene: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    pub scale: usize,
    pub seed: u64,
    /// Frames per written segment.
    pub segment_len: usize,
    /// Length of the motionless stretch placed in every scene.
    pub static_len: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            scenes: 8,
            frames_per_scene: 120,
            hr_height: 128,
            hr_width: 128,
            scale: 2,
            seed: 0,
            segment_len: 24,
            static_len: 16,
        }
    }
}

impl DatasetConfig {
    /// Held-out scenes: the last quarter, at least one when there are two
    /// or more scenes.
    pub fn test_scenes(&self) -> usize {
        if self.scenes < 2 {
            0
        } else {
            ((self.scenes as f64 / 4.0).round() as usize).max(1)
        }
    }
}

/// Manifest paths of a written dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

const CAMERA_SPEEDS: [f32; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
const SPRITE_SPEEDS: [f32; 9] = [-3.0, -2.0, -1.5, -0.5, 0.0, 0.5, 1.0, 2.0, 2.5];

/// Piecewise-constant per-frame velocities; entry 0 is zero.
fn legs(rng: &mut ChaCha8Rng, frames: usize, speeds: &[f32]) -> Vec<[f32; 2]> {
    let mut v = vec![[0.0f32; 2]; frames];
    let mut t = 1;
    while t < frames {
        let len = rng.gen_range(8..=30);
        let vel = [*speeds.choose(rng).unwrap(), *speeds.choose(rng).unwrap()];
        for slot in v.iter_mut().skip(t).take(len) {
            *slot = vel;
        }
        t += len;
    }
    v
}

fn is_static(ranges: &[[usize; 2]], t: usize) -> bool {
    ranges.iter().any(|r| t > r[0] && t < r[1])
}

/// Deterministic random scene `index` of a dataset.
pub fn random_scene(config: &DatasetConfig, index: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);
    let frames = config.frames_per_scene;
    let (h, w) = (config.hr_height as f32, config.hr_width as f32);

    let mut static_ranges = Vec::new();
    if config.static_len > 0 && frames >= config.static_len {
        let seg = config.segment_len.max(1);
        let segments = frames.div_ceil(seg);
        let fits: Vec<usize> = (0..segments)
            .filter(|&j| j * seg + 2 + config.static_len <= (j * seg + seg).min(frames))
            .collect();
        if let Some(&j) = fits.choose(&mut rng) {
            let start = j * seg + 2;
            static_ranges.push([start, start + config.static_len]);
        }
    }

    let mut cam_vel = legs(&mut rng, frames, &CAMERA_SPEEDS);
    let mut camera = Vec::with_capacity(frames);
    let mut cam = [
        rng.gen_range(-500.0..500.0f32).round(),
        rng.gen_range(-500.0..500.0f32).round(),
    ];
    for (t, v) in cam_vel.iter_mut().enumerate() {
        if is_static(&static_ranges, t) {
            *v = [0.0, 0.0];
        }
        cam = [cam[0] + v[0], cam[1] + v[1]];
        camera.push(cam);
    }

    let n_regular = rng.gen_range(3..=5);
    let n_thin = rng.gen_range(1..=2);
    let n = n_regular + n_thin;
    let mut depths: Vec<f32> = (0..n)
        .map(|k| 0.1 + 0.7 * (k as f32 + rng.gen_range(0.1..0.9)) / n as f32)
        .collect();
    depths.shuffle(&mut rng);

    let mut sprites = Vec::with_capacity(n);
    for (k, &depth) in depths.iter().enumerate() {
        let (shape, size, texture) = if k < n_regular {
            let shape = if rng.gen_bool(0.5) {
                Shape::Rect
            } else {
                Shape::Disc
            };
            let size = [
                rng.gen_range(12.0..40.0f32).round(),
                rng.gen_range(12.0..40.0f32).round(),
            ];
            (shape, size, Texture::random(&mut rng, 3.0))
        } else {
            let thickness = rng.gen_range(1..=2) as f32;
            let length = rng.gen_range(30.0..70.0f32).round();
            let size = if rng.gen_bool(0.5) {
                [thickness, length]
            } else {
                [length, thickness]
            };
            (Shape::Rect, size, Texture::solid(random_color(&mut rng)))
        };
        let mut vel = legs(&mut rng, frames, &SPRITE_SPEEDS);
        let mut pos = [
            (camera[0][0] + rng.gen_range(0.0..(w - size[0]).max(1.0))).round(),
            (camera[0][1] + rng.gen_range(0.0..(h - size[1]).max(1.0))).round(),
        ];
        let mut path = Vec::with_capacity(frames);
        for t in 0..frames {
            if is_static(&static_ranges, t) {
                vel[t] = [0.0, 0.0];
            }
            // Turn around when drifting out of view so sprites stay visible.
            let centre = [
                pos[0] + 0.5 * size[0] - camera[t][0],
                pos[1] + 0.5 * size[1] - camera[t][1],
            ];
            for (axis, extent) in [(0usize, w), (1, h)] {
                let out_low = centre[axis] < 0.1 * extent && vel[t][axis] < 0.0;
                let out_high = centre[axis] > 0.9 * extent && vel[t][axis] > 0.0;
                if out_low || out_high {
                    for v in vel.iter_mut().skip(t) {
                        v[axis] = -v[axis];
                    }
                }
            }
            pos = [pos[0] + vel[t][0], pos[1] + vel[t][1]];
            path.push(pos);
        }
        sprites.push(Sprite {
            shape,
            size,
            texture,
            depth,
            path,
        });
    }

    SceneSpec {
        name: format!("scene_{index:02}"),
        seed: config.seed,
        hr_height: config.hr_height,
        hr_width: config.hr_width,
        scale: config.scale,
        frames,
        first_frame: 0,
        background: Texture::random(&mut rng, 2.5),
        background_depth: 0.95,
        camera,
        sprites,
        static_ranges,
        jitter: JitterMode::Halton,
        prefilter: Prefilter::MipBias(-(config.scale as f32).log2()),
    }
}

/// Writes frames `range` of a rendered scene as one segment.
fn write_segment(
    spec: &SceneSpec,
    frames: &[GroundTruthFrame],
    segment: usize,
    range: std::ops::Range<usize>,
    dir: &Path,
) -> Result<PathBuf> {
    let mut records = Vec::with_capacity(range.len());
    for t in range.clone() {
        let f = &frames[t];
        let rel = |kind: &str| format!("frames/{kind}_{t:05}.qras");
        write_raster(&dir.join(rel("color")), &f.lr_color)?;
        write_raster(&dir.join(rel("depth")), &f.lr_depth)?;
        write_raster(&dir.join(rel("motion")), &f.lr_motion_raw)?;
        write_raster(&dir.join(rel("target")), &f.hr_reference)?;
        records.push(FrameRecord {
            index: Some(f.index),
            color: rel("color"),
            depth: rel("depth"),
            motion: rel("motion"),
            target: Some(rel("target")),
            jitter: [f.jitter.x, f.jitter.y],
        });
    }
    let static_ranges = spec
        .static_ranges
        .iter()
        .filter_map(|r| {
            let (a, b) = (r[0].max(range.start), r[1].min(range.end));
            (a < b).then(|| [a - range.start, b - range.start])
        })
        .collect();
    let manifest = SequenceManifest {
        scene: spec.name.clone(),
        segment: segment as u32,
        fps: 60.0,
        scale: spec.scale,
        camera: CameraIntrinsics::default(),
        motion: MotionEncoding::Normalized {
            flip_y: SYNTH_MOTION.flip_y,
            negate: SYNTH_MOTION.negate,
        },
        static_ranges,
        frames: records,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

/// Renders `config.scenes` random scenes under `root`, split into segments,
/// and writes `train.json` / `test.json` manifest lists. The last
/// [`DatasetConfig::test_scenes`] scenes are held out.
pub fn make_dataset(config: &DatasetConfig, root: &Path) -> Result<DatasetIndex> {
    if config.scenes == 0 || config.frames_per_scene == 0 || config.segment_len == 0 {
        return Err(Error::config(
            "dataset needs at least one scene, frame and segment frame",
        ));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let n_test = config.test_scenes();
    let (mut train_rel, mut test_rel) = (Vec::new(), Vec::new());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..config.scenes {
        let spec = random_scene(config, k);
        let frames = render_sequence(&spec)?;
        let held_out = k >= config.scenes - n_test;
        for (j, start) in (0..spec.frames).step_by(config.segment_len).enumerate() {
            let end = (start + config.segment_len).min(spec.frames);
            let rel = format!("scenes/{}/seg_{j:02}", spec.name);
            let path = write_segment(&spec, &frames, j, start..end, &root.join(&rel))?;
            let rel = format!("{rel}/manifest.json");
            if held_out {
                test_rel.push(rel);
                test.push(path);
            } else {
                train_rel.push(rel);
                train.push(path);
            }
        }
        info!("rendered {} ({} frames)", spec.name, spec.frames);
    }
    write_manifest_list(&root.join("train.json"), &train_rel)?;
    write_manifest_list(&root.join("test.json"), &test_rel)?;
    let meta = serde_json::to_string_pretty(config).expect("config serializes");
    let meta_path = root.join("dataset.json");
    fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        train,
        test,
    })
}
