use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jitterscale"));
    c.env_remove("JITTERSCALE_OUTPUT_DIR")
        .env("JITTERSCALE_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, name: &str, frames: &str, seg: &str) -> PathBuf {
    ok(
        dir,
        &[
            "synth-gen",
            "--out",
            name,
            "--scenes",
            "2",
            "--frames",
            frames,
            "--height",
            "64",
            "--width",
            "64",
            "--segment-len",
            seg,
            "--static-len",
            "8",
        ],
    );
    dir.join(name)
}

fn first_manifest(root: &Path) -> PathBuf {
    let list: Vec<String> =
        serde_json::from_str(&fs::read_to_string(root.join("test.json")).unwrap()).unwrap();
    root.join(&list[0])
}

fn png_dims(path: &Path) -> (u32, u32) {
    let b = fs::read(path).unwrap();
    assert_eq!(&b[1..4], b"PNG");
    let w = u32::from_be_bytes(b[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(b[20..24].try_into().unwrap());
    (w, h)
}

const TINY: &str = r#"
iterations = 4
milestones = []
lr = 1e-3
batch = 2
clip_len = 4
hr_crop = 32
seed = 3
checkpoint_every = 2
validate_every = 2
train_list = "ds/train.json"
train_fraction = 0.5
output_dir = "run"

[model]
variant = "custom"
scale = 2
features = 4
layers = 1
mlp_hidden = 16
"#;

#[test]
fn help_lists_subcommands_and_flags() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "synth-gen",
        "import-qrisp",
        "train",
        "eval",
        "upscale",
        "gradcheck",
        "profile",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let out = bin().args(["train", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config",
        "--resume",
        "--iterations",
        "--lr",
        "--out",
        "--threads",
    ] {
        assert!(text.contains(flag), "{flag} missing from train help");
    }
}

#[test]
fn unknown_flag_exits_two() {
    let out = bin()
        .args(["gradcheck", "--no-such-flag"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["upscale", "--manifest", "m.json", "--variant", "XL"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_output_dir_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["synth-gen", "--scenes", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_prints_passing_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["gradcheck", "--frames", "4", "--seed", "1"]);
    for name in [
        "conv3x3",
        "depth_to_space",
        "sample",
        "blend",
        "dense",
        "l1",
        "rollout",
    ] {
        let line = text
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("no {name} row"));
        assert!(line.ends_with("pass"), "{line}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn upscale_writes_one_png_per_frame_at_scaled_size() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), "ds", "16", "16");
    let manifest = first_manifest(&ds);
    ok(
        dir.path(),
        &[
            "upscale",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            "up",
            "--variant",
            "S",
            "--scale",
            "2",
        ],
    );
    let mut pngs: Vec<_> = fs::read_dir(dir.path().join("up"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    pngs.sort();
    assert_eq!(pngs.len(), 16);
    for p in &pngs {
        assert_eq!(png_dims(p), (64, 64));
    }
}

#[test]
fn environment_sets_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let out = bin()
        .current_dir(dir.path())
        .env("JITTERSCALE_OUTPUT_DIR", &env_dir)
        .args([
            "synth-gen",
            "--scenes",
            "1",
            "--frames",
            "8",
            "--height",
            "32",
            "--width",
            "32",
            "--segment-len",
            "8",
            "--static-len",
            "4",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(env_dir.join("dataset.json").exists());

    let out = bin()
        .current_dir(dir.path())
        .env("JITTERSCALE_OUTPUT_DIR", &env_dir)
        .args([
            "synth-gen",
            "--out",
            "from_flag",
            "--scenes",
            "1",
            "--frames",
            "8",
            "--height",
            "32",
            "--width",
            "32",
            "--segment-len",
            "8",
            "--static-len",
            "4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_flag/dataset.json").exists());
}

#[test]
fn synth_train_eval_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "ds", "24", "12");
    fs::write(d.join("tiny.toml"), TINY).unwrap();

    let text = ok(d, &["train", "--config", "tiny.toml"]);
    assert!(text.contains("# train: resolved config"));
    assert!(text.contains("iterations = 4"));
    // Flag overrides the config file.
    let text = ok(
        d,
        &[
            "train",
            "--config",
            "tiny.toml",
            "--out",
            "run2",
            "--threads",
            "1",
        ],
    );
    assert!(text.contains("run2"));

    for run in ["run", "run2"] {
        for f in [
            "final.qssc",
            "metrics.csv",
            "train.toml",
            "checkpoint_000002.qssc",
            "checkpoint_000004.qssc",
        ] {
            assert!(d.join(run).join(f).exists(), "{run}/{f}");
        }
    }
    assert_eq!(
        fs::read(d.join("run/final.qssc")).unwrap(),
        fs::read(d.join("run2/final.qssc")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(d.join("run/metrics.csv")).unwrap(),
        fs::read_to_string(d.join("run2/metrics.csv")).unwrap()
    );

    let eval = [
        "eval",
        "--checkpoint",
        "run/final.qssc",
        "--list",
        "ds/test.json",
        "--crop-size",
        "16",
    ];
    ok(d, &[&eval[..], &["--out", "ev1"]].concat());
    ok(d, &[&eval[..], &["--out", "ev2"]].concat());
    let report = fs::read_to_string(d.join("ev1/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("scene,segment,frames,psnr,ssim,pixel_std,baseline_psnr,baseline_ssim")
    );
    assert!(lines.count() >= 1);
    assert_eq!(
        report,
        fs::read_to_string(d.join("ev2/report.csv")).unwrap()
    );
    assert!(d.join("ev1/notes.txt").exists());

    let out = run(d, &[&eval[..], &["--out", "ev3", "--scale", "3"]].concat());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_continues_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "ds", "24", "12");
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(d, &["train", "--config", "tiny.toml"]);
    ok(
        d,
        &[
            "train",
            "--config",
            "tiny.toml",
            "--out",
            "half",
            "--iterations",
            "2",
        ],
    );
    ok(
        d,
        &[
            "train",
            "--config",
            "tiny.toml",
            "--out",
            "half",
            "--resume",
            "half/checkpoint_000002.qssc",
        ],
    );
    assert_eq!(
        fs::read(d.join("run/final.qssc")).unwrap(),
        fs::read(d.join("half/final.qssc")).unwrap()
    );
}

#[test]
fn profile_reports_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(
        dir.path(),
        &[
            "profile", "--height", "32", "--width", "32", "--steps", "3", "--warmup", "1",
        ],
    );
    for stage in ["mv dilation", "warping", "network", "total"] {
        assert!(text.contains(stage), "{stage}");
    }
}
