mod common;

use std::fs;
use std::path::Path;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use jitterscale::data::{
    decode_depth_f64, decode_motion, decode_raster, encode_depth, encode_motion, encode_raster,
    halton, import_qrisp, jitter_for_frame, jitter_sequence, load_sequence, read_manifest_list,
    read_raster, sample_clips, split_segments, write_color_png, write_raster, ClipSampler,
    ClipSpec, FrameBundle, ImportOptions, ModalityBias, MotionConvention, JITTER_PERIOD,
    RASTER_HEADER_LEN,
};
use jitterscale::raster::Raster;
use jitterscale::synth::{
    make_dataset, random_scene, render_sequence, DatasetConfig, SYNTH_MOTION,
};
use jitterscale::warp::{compensate_jitter, MotionField};

const DEPTH_TOL: f64 = 1.0 / (255.0 * 255.0 * 255.0 * 255.0);

/// Canonical remainder encoding via the integer `floor(d · 255⁴)` written in
/// base 255.
fn depth_oracle(d: f64) -> [u8; 4] {
    let mut n = (d * 255f64.powi(4)).floor() as u64;
    let mut out = [0u8; 4];
    for k in (0..4).rev() {
        out[k] = (n % 255) as u8;
        n /= 255;
    }
    out
}

fn small_dataset() -> DatasetConfig {
    DatasetConfig {
        scenes: 2,
        frames_per_scene: 20,
        hr_height: 32,
        hr_width: 32,
        scale: 2,
        seed: 5,
        segment_len: 10,
        static_len: 6,
    }
}

#[test]
fn raster_file_round_trip_is_bitwise() {
    let mut r = rng(31);
    for _ in 0..20 {
        let (c, h, w) = (r.gen_range(1..5), r.gen_range(1..9), r.gen_range(1..9));
        let mut x = random_raster(&mut r, c, h, w, -1e3, 1e3);
        let specials = [
            0.0,
            -0.0,
            f32::MIN_POSITIVE / 4.0,
            f32::MAX,
            f32::MIN,
            1e-38,
        ];
        for (i, v) in specials.iter().enumerate().take(x.len()) {
            x.data_mut()[i] = *v;
        }
        let bytes = encode_raster(&x);
        assert_eq!(bytes.len(), RASTER_HEADER_LEN + 4 * c * h * w);
        assert_eq!(&bytes[..4], b"QRAS");
        assert_eq!(
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
            c
        );
        let back = decode_raster(&bytes).unwrap();
        let bits = |r: &Raster| r.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(back.shape(), x.shape());
        assert_eq!(bits(&back), bits(&x));
    }
    let dir = tempfile::tempdir().unwrap();
    let x = random_raster(&mut r, 3, 4, 5, 0.0, 1.0);
    let path = dir.path().join("nested/x.qras");
    write_raster(&path, &x).unwrap();
    assert_eq!(read_raster(&path).unwrap(), x);
    assert_eq!(fs::metadata(&path).unwrap().len() as usize, 20 + 4 * 60);
}

#[test]
fn corrupt_raster_files_are_rejected() {
    let x = Raster::<f32>::filled(1, 2, 2, 0.5);
    let bytes = encode_raster(&x);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode_raster(&bad_magic).is_err());
    assert!(decode_raster(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_raster(&extra).is_err());
}

#[test]
fn depth_encoding_matches_oracle_and_decodes_within_tolerance() {
    let mut r = rng(32);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000_000 {
        let d: f64 = r.gen_range(0.0..1.0);
        let canonical = depth_oracle(d);
        let [a, b, c, e] = canonical;
        let err = (decode_depth_f64(a, b, c, e) - d).abs();
        worst = worst.max(err);
        let [a, b, c, e] = encode_depth(d);
        worst = worst.max((decode_depth_f64(a, b, c, e) - d).abs());
    }
    assert!(worst <= DEPTH_TOL, "worst depth error {worst:e}");
}

#[test]
fn halton_matches_digit_reversal() {
    for base in [2u32, 3] {
        for i in 0..16u64 {
            let (num, den) = digit_reversal(i + 1, base as u64);
            assert_eq!(
                halton(i, base),
                num as f64 / den as f64,
                "index {i} base {base}"
            );
        }
    }
    assert_eq!(halton(0, 2), 0.5);
    assert_eq!(halton(1, 2), 0.25);
    assert_eq!(halton(2, 2), 0.75);
}

#[test]
fn jitter_sequence_is_centered_and_periodic() {
    let seq = jitter_sequence();
    assert_eq!(seq.len(), JITTER_PERIOD);
    let (mut mx, mut my) = (0.0f64, 0.0f64);
    for (i, j) in seq.iter().enumerate() {
        let (nx, dx) = digit_reversal(i as u64 + 1, 2);
        let (ny, dy) = digit_reversal(i as u64 + 1, 3);
        assert_eq!(j.x, (nx as f64 / dx as f64 - 0.5) as f32);
        assert_eq!(j.y, (ny as f64 / dy as f64 - 0.5) as f32);
        assert!((-0.5..0.5).contains(&j.x) && (-0.5..0.5).contains(&j.y));
        assert_eq!(jitter_for_frame(i + 16), *j);
        mx += j.x as f64;
        my += j.y as f64;
    }
    assert!((mx / 16.0).abs() <= 0.05 && (my / 16.0).abs() <= 0.05);
}

#[test]
fn synthetic_motion_files_decode_to_analytic_fields() {
    let mut spec = random_scene(&small_dataset(), 0);
    spec.frames = 6;
    spec.camera.truncate(6);
    spec.sprites.iter_mut().for_each(|s| s.path.truncate(6));
    spec.static_ranges.clear();
    for f in render_sequence(&spec).unwrap() {
        let decoded = decode_motion(&f.lr_motion_raw, SYNTH_MOTION).unwrap();
        assert_eq!(decoded, f.lr_motion);
        // Power-of-two sizes make the normalization exact both ways.
        assert_eq!(encode_motion(&decoded, SYNTH_MOTION), f.lr_motion_raw);
        let true_motion = compensate_jitter(&decoded, f.previous_jitter, f.jitter);
        for (a, b) in true_motion
            .raster()
            .data()
            .iter()
            .zip(f.analytic_lr_motion.raster().data())
        {
            assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn motion_conventions_compose() {
    let mut r = rng(33);
    let raw = random_raster(&mut r, 2, 4, 8, -1.0, 1.0);
    let plain = decode_motion(&raw, MotionConvention::default()).unwrap();
    for (flip_y, negate) in [(true, false), (false, true), (true, true)] {
        let mv = decode_motion(&raw, MotionConvention { flip_y, negate }).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let sx = if negate { -1.0 } else { 1.0 };
                let sy = sx * if flip_y { -1.0 } else { 1.0 };
                assert_eq!(mv.dx(y, x), sx * plain.dx(y, x));
                assert_eq!(mv.dy(y, x), sy * plain.dy(y, x));
                assert_eq!(plain.dx(y, x), raw.get(1, y, x) * 8.0);
                assert_eq!(plain.dy(y, x), raw.get(0, y, x) * 4.0);
            }
        }
    }
}

#[test]
fn written_dataset_loads_back_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_dataset();
    let index = make_dataset(&config, dir.path()).unwrap();
    assert_eq!(index.train.len(), 2);
    assert_eq!(index.test.len(), 2);
    assert_eq!(
        read_manifest_list(&dir.path().join("test.json")).unwrap(),
        index.test
    );
    for k in 0..config.scenes {
        let frames = render_sequence(&random_scene(&config, k)).unwrap();
        for j in 0..2 {
            let manifest = dir
                .path()
                .join(format!("scenes/scene_{k:02}/seg_{j:02}/manifest.json"));
            let loaded = load_sequence(&manifest, 2).unwrap();
            assert_eq!(loaded.len(), 10);
            for (i, b) in loaded.iter().enumerate() {
                assert_eq!(*b, frames[j * 10 + i].to_bundle());
                assert_eq!(b.jitter, jitter_for_frame(j * 10 + i));
                assert_eq!(b.lr_dims(), (16, 16));
            }
        }
    }
    assert!(load_sequence(&dir.path().join("scenes/scene_00/seg_00/manifest.json"), 4).is_err());
}

#[test]
fn missing_frame_file_names_frame_and_modality() {
    let dir = tempfile::tempdir().unwrap();
    make_dataset(&small_dataset(), dir.path()).unwrap();
    let seg = dir.path().join("scenes/scene_00/seg_00");
    let victim = fs::read_dir(seg.join("frames"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("depth")
        })
        .unwrap();
    fs::remove_file(&victim).unwrap();
    let err = load_sequence(&seg.join("manifest.json"), 2)
        .unwrap_err()
        .to_string();
    assert!(err.contains("depth"), "{err}");
    assert!(err.contains("frame"), "{err}");
}

fn write_qrisp_segment(dir: &Path, frames: &[jitterscale::synth::GroundTruthFrame]) {
    let names = [
        "MipBiasMinus1Jittered",
        "DepthMipBiasMinus1Jittered",
        "MotionVectorsMipBiasMinus1Jittered",
        "Enhanced",
    ];
    for n in names {
        fs::create_dir_all(dir.join(n)).unwrap();
    }
    let mut jitters = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let stem = format!("{i:04}");
        write_color_png(&f.lr_color, &dir.join(names[0]).join(format!("{stem}.png"))).unwrap();
        let (h, w) = (f.lr_depth.height() as u32, f.lr_depth.width() as u32);
        let depth = image::RgbaImage::from_fn(w, h, |x, y| {
            image::Rgba(encode_depth(
                f.lr_depth.get(0, y as usize, x as usize) as f64
            ))
        });
        depth
            .save(dir.join(names[1]).join(format!("{stem}.png")))
            .unwrap();
        write_raster(
            &dir.join(names[2]).join(format!("{stem}.qras")),
            &f.lr_motion_raw,
        )
        .unwrap();
        write_color_png(
            &f.hr_reference,
            &dir.join(names[3]).join(format!("{stem}.png")),
        )
        .unwrap();
        jitters.push(format!("{{\"jitter\": [{}, {}]}}", f.jitter.x, f.jitter.y));
    }
    let camera = format!(
        "{{\"near\": 0.1, \"far\": 100.0, \"fov\": 60.0, \"frames\": [{}]}}",
        jitters.join(", ")
    );
    fs::write(dir.join("camera.json"), camera).unwrap();
}

#[test]
fn qrisp_import_recovers_synthetic_frames() {
    let mut spec = random_scene(&small_dataset(), 1);
    spec.frames = 4;
    spec.camera.truncate(4);
    spec.sprites.iter_mut().for_each(|s| s.path.truncate(4));
    spec.static_ranges.clear();
    let frames = render_sequence(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_qrisp_segment(&src, &frames);
    let options = ImportOptions {
        scale: 2,
        bias: ModalityBias::Biased,
        convention: SYNTH_MOTION,
        scene: "imported".into(),
        segment: 3,
        fps: 60.0,
    };
    let manifest = import_qrisp(&src, &dir.path().join("out"), &options).unwrap();
    let loaded = load_sequence(&manifest, 2).unwrap();
    assert_eq!(loaded.len(), 4);
    for (b, f) in loaded.iter().zip(&frames) {
        assert_eq!(b.lr_motion, f.lr_motion);
        assert_eq!(b.jitter, f.jitter);
        let q = |a: &Raster, b: &Raster| {
            a.data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-6)
        };
        assert!(q(&b.lr_color, &f.lr_color));
        assert!(q(b.hr_target.as_ref().unwrap(), &f.hr_reference));
        // Packed depth truncates below 255⁻⁴ before narrowing to f32.
        for (x, y) in b.lr_depth.data().iter().zip(f.lr_depth.data()) {
            assert!((x - y).abs() <= 1e-7);
        }
    }
    let bad = ImportOptions {
        convention: MotionConvention::default(),
        ..options
    };
    let flipped = load_sequence(
        &import_qrisp(&src, &dir.path().join("bad"), &bad).unwrap(),
        2,
    )
    .unwrap();
    assert_ne!(flipped[1].lr_motion, frames[1].lr_motion);
}

fn synthetic_sequences() -> Vec<Vec<FrameBundle>> {
    let config = DatasetConfig {
        frames_per_scene: 12,
        ..small_dataset()
    };
    (0..2)
        .map(|k| {
            render_sequence(&random_scene(&config, k))
                .unwrap()
                .iter()
                .map(|f| f.to_bundle())
                .collect()
        })
        .collect()
}

#[test]
fn clip_sampling_is_deterministic_and_aligned() {
    let seqs = synthetic_sequences();
    let spec = ClipSpec {
        clip_len: 4,
        hr_crop: 16,
        batch: 3,
        scale: 2,
    };
    let a = sample_clips(&seqs, spec, 9).unwrap();
    let b = sample_clips(&seqs, spec, 9).unwrap();
    assert_eq!(a.clips.len(), 3);
    for (x, y) in a.clips.iter().zip(&b.clips) {
        assert_eq!(
            (x.sequence, x.start, x.lr_origin),
            (y.sequence, y.start, y.lr_origin)
        );
        assert_eq!(x.frames, y.frames);
        assert_eq!(x.hr_origin, (2 * x.lr_origin.0, 2 * x.lr_origin.1));
        for (i, f) in x.frames.iter().enumerate() {
            let src = &seqs[x.sequence][x.start + i];
            assert_eq!(f.lr_color.shape(), (3, 8, 8));
            assert_eq!(
                f.lr_color,
                src.lr_color
                    .crop(x.lr_origin.0, x.lr_origin.1, 8, 8)
                    .unwrap()
            );
            let t = src.hr_target.as_ref().unwrap();
            assert_eq!(
                f.hr_target.as_ref().unwrap(),
                &t.crop(x.hr_origin.0, x.hr_origin.1, 16, 16).unwrap()
            );
        }
    }

    // Resuming from a saved state continues the same stream.
    let mut s = ClipSampler::new(4);
    s.sample(&seqs, spec).unwrap();
    let state = s.state();
    let next = s.sample(&seqs, spec).unwrap();
    let resumed = ClipSampler::restore(state).sample(&seqs, spec).unwrap();
    for (x, y) in next.clips.iter().zip(&resumed.clips) {
        assert_eq!(
            (x.sequence, x.start, x.lr_origin),
            (y.sequence, y.start, y.lr_origin)
        );
    }
    assert!(ClipSpec {
        hr_crop: 12,
        ..spec
    }
    .validate()
    .is_err());
    assert_eq!(
        ClipSpec {
            hr_crop: 264,
            scale: 3,
            ..spec
        }
        .lr_crop(),
        88
    );
}

#[test]
fn split_is_a_seeded_partition_per_scene() {
    let items: Vec<(String, usize)> = (0..10)
        .map(|i| ("a".to_string(), i))
        .chain((0..3).map(|i| ("b".to_string(), i)))
        .chain([("c".to_string(), 0)])
        .collect();
    let (train, val) = split_segments(&items, |i| i.0.as_str(), 0.8, 1);
    assert_eq!(train.iter().filter(|i| i.0 == "a").count(), 8);
    assert_eq!(val.iter().filter(|i| i.0 == "a").count(), 2);
    assert!(train.iter().any(|i| i.0 == "c"));
    let mut all: Vec<_> = train.iter().chain(&val).cloned().collect();
    all.sort();
    let mut want = items.clone();
    want.sort();
    assert_eq!(all, want);
    assert_eq!(
        split_segments(&items, |i| i.0.as_str(), 0.8, 1),
        (train, val)
    );
}

proptest! {
    #![proptest_config(prop_config(256))]

    #[test]
    fn depth_encoding_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(lo < hi - DEPTH_TOL);
        prop_assert!(encode_depth(lo) <= encode_depth(hi));
    }

    #[test]
    fn motion_round_trip_on_power_of_two_grids(seed in any::<u64>(), flip_y in any::<bool>(), negate in any::<bool>()) {
        let raw = random_raster(&mut rng(seed), 2, 8, 16, -1.0, 1.0);
        let conv = MotionConvention { flip_y, negate };
        let mv: MotionField = decode_motion(&raw, conv).unwrap();
        prop_assert_eq!(encode_motion(&mv, conv), raw);
    }
}
