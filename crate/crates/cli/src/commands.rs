use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use jitterscale::data::{
    import_qrisp, load_sequence, write_color_png, write_raster, ImportOptions, ModalityBias,
    MotionConvention,
};
use jitterscale::eval::{evaluate, load_segments, profile, EvalOptions, Upscaler};
use jitterscale::gradcheck;
use jitterscale::model::{Checkpoint, Model, ModelConfig};
use jitterscale::synth::{make_dataset, DatasetConfig};
use jitterscale::train::{fit, TrainConfig};

/// Overrides the output directory of every command that writes files.
pub const OUTPUT_ENV: &str = "JITTERSCALE_OUTPUT_DIR";

/// Bad flag values or combinations; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "jitterscale",
    version,
    about = "Neural temporal supersampling toolkit"
)]
pub struct Cli {
    /// Worker threads; 1 gives the strictly sequential mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Debug logging.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a procedural dataset with train/test manifest lists.
    SynthGen(SynthGenArgs),
    /// Convert one QRISP-layout segment directory to the internal format.
    ImportQrisp(ImportArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint against HR targets and the bicubic baseline.
    Eval(EvalArgs),
    /// Upscale one sequence and write HR frames.
    Upscale(UpscaleArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Time the stages of one inference step.
    Profile(ProfileArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthGenArgs {
    /// Output directory (or $JITTERSCALE_OUTPUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub scenes: usize,
    #[arg(long, default_value_t = 120)]
    pub frames: usize,
    /// HR height, a multiple of 8·scale.
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// HR width, a multiple of 8·scale.
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames per segment.
    #[arg(long, default_value_t = 24)]
    pub segment_len: usize,
    /// Frames of the motionless stretch in every scene.
    #[arg(long, default_value_t = 16)]
    pub static_len: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum BiasArg {
    Biased,
    Unbiased,
}

#[derive(Args, Debug, Serialize)]
pub struct ImportArgs {
    /// Segment directory with camera.json and per-modality folders.
    #[arg(long)]
    pub src: PathBuf,
    /// Output directory (or $JITTERSCALE_OUTPUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scale: usize,
    /// Which mip-bias variant of the LR modalities to read.
    #[arg(long, value_enum, default_value = "biased")]
    pub bias: BiasArg,
    /// Negate the vertical motion component.
    #[arg(long)]
    pub flip_y: bool,
    /// Negate both motion components.
    #[arg(long)]
    pub negate: bool,
    #[arg(long, default_value = "scene")]
    pub scene: String,
    #[arg(long, default_value_t = 0)]
    pub segment: u32,
    #[arg(long, default_value_t = 60.0)]
    pub fps: f32,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// TOML training config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON list of training segment manifests.
    #[arg(long)]
    pub train_list: Option<PathBuf>,
    /// Output directory (flag, then $JITTERSCALE_OUTPUT_DIR, then config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Comma-separated iterations at which the learning rate halves.
    #[arg(long, value_delimiter = ',')]
    pub milestones: Option<Vec<usize>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub clip_len: Option<usize>,
    #[arg(long)]
    pub hr_crop: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub validate_every: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// S, M, L or custom.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub no_dilation: bool,
    #[arg(long)]
    pub no_blending: bool,
    #[arg(long)]
    pub no_first_conditioning: bool,
    #[arg(long)]
    pub no_last_conditioning: bool,
}

/// Evaluation settings file.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub checkpoint: Option<PathBuf>,
    pub list: Option<PathBuf>,
    pub scale: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub crop_size: Option<usize>,
    pub blending: Option<bool>,
    pub dilation: Option<bool>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum MethodArg {
    Model,
    Bicubic,
    Oracle,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// TOML evaluation config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON list of test segment manifests.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Must match the checkpoint when given.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Output directory for report.csv, notes.txt and crops.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Side of the HR comparison crops; 0 disables them.
    #[arg(long)]
    pub crop_size: Option<usize>,
    /// Evaluate with blending forced off.
    #[arg(long)]
    pub no_blending: bool,
    /// Evaluate with motion-vector dilation forced off.
    #[arg(long)]
    pub no_dilation: bool,
    /// What produces the HR frames.
    #[arg(long, value_enum, default_value = "model")]
    pub method: MethodArg,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelChoice {
    /// Trained model; otherwise a freshly initialized one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "S")]
    pub variant: String,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Initialization seed when no checkpoint is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelChoice {
    fn load(&self) -> Result<Model> {
        match &self.checkpoint {
            Some(p) => Ok(Checkpoint::read(p)?.model()?),
            None => {
                let config = ModelConfig::variant(&self.variant, self.scale)
                    .map_err(|e| usage(e.to_string()))?;
                Ok(Model::init(config, self.seed)?)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum FormatArg {
    Png,
    Qras,
}

#[derive(Args, Debug, Serialize)]
pub struct UpscaleArgs {
    /// Segment manifest to upscale.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (or $JITTERSCALE_OUTPUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelChoice,
    #[arg(long, value_enum, default_value = "png")]
    pub format: FormatArg,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames of the rollout check.
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelChoice,
    /// LR input height.
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// LR input width.
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Timed steps.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Untimed warm-up steps.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
}

fn echo<T: Serialize>(command: &str, value: &T) -> Result<()> {
    let text = toml::to_string(value).context("serializing the resolved config")?;
    println!("# {command}: resolved config\n{text}");
    Ok(())
}

/// Flag, then environment, then fallback.
fn output_dir(flag: &Option<PathBuf>, fallback: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    if let Some(v) = std::env::var_os(OUTPUT_ENV) {
        return Ok(PathBuf::from(v));
    }
    fallback.ok_or_else(|| {
        usage(format!(
            "no output directory: pass --out or set {OUTPUT_ENV}"
        ))
    })
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::SynthGen(a) => synth_gen(a),
        Command::ImportQrisp(a) => import(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Upscale(a) => upscale(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Profile(a) => profile_cmd(a),
    }
}

fn synth_gen(a: SynthGenArgs) -> Result<()> {
    let out = output_dir(&a.out, None)?;
    let config = DatasetConfig {
        scenes: a.scenes,
        frames_per_scene: a.frames,
        hr_height: a.height,
        hr_width: a.width,
        scale: a.scale,
        seed: a.seed,
        segment_len: a.segment_len,
        static_len: a.static_len,
    };
    #[derive(Serialize)]
    struct Resolved<'a> {
        out: &'a Path,
        #[serde(flatten)]
        dataset: &'a DatasetConfig,
    }
    echo(
        "synth-gen",
        &Resolved {
            out: &out,
            dataset: &config,
        },
    )?;
    let index = make_dataset(&config, &out)?;
    println!(
        "wrote {} training and {} test segments under {}",
        index.train.len(),
        index.test.len(),
        out.display()
    );
    Ok(())
}

fn import(a: ImportArgs) -> Result<()> {
    let out = output_dir(&a.out, None)?;
    echo("import-qrisp", &a)?;
    let options = ImportOptions {
        scale: a.scale,
        bias: match a.bias {
            BiasArg::Biased => ModalityBias::Biased,
            BiasArg::Unbiased => ModalityBias::Unbiased,
        },
        convention: MotionConvention {
            flip_y: a.flip_y,
            negate: a.negate,
        },
        scene: a.scene.clone(),
        segment: a.segment,
        fps: a.fps,
    };
    let manifest = import_qrisp(&a.src, &out, &options)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => TrainConfig::read(path)?,
        None => {
            let list = a
                .train_list
                .clone()
                .ok_or_else(|| usage("train needs --config or --train-list"))?;
            TrainConfig::desk(list, PathBuf::new())
        }
    };
    let fallback = (!config.output_dir.as_os_str().is_empty()).then(|| config.output_dir.clone());
    config.output_dir = output_dir(&a.out, fallback)?;
    if let Some(v) = &a.train_list {
        config.train_list = v.clone();
    }
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field.clone() {
                config.$field = v;
            }
        )*};
    }
    set!(
        iterations,
        milestones,
        lr,
        batch,
        clip_len,
        hr_crop,
        seed,
        checkpoint_every,
        validate_every,
        train_fraction
    );
    let m = &mut config.model;
    if let Some(v) = &a.variant {
        m.variant = v.clone();
    }
    if let Some(v) = a.scale {
        m.scale = v;
    }
    if a.features.is_some() {
        m.features = a.features;
    }
    if a.layers.is_some() {
        m.layers = a.layers;
    }
    if let Some(v) = a.mlp_hidden {
        m.mlp_hidden = v;
    }
    m.use_dilation &= !a.no_dilation;
    m.use_blending &= !a.no_blending;
    m.condition_first &= !a.no_first_conditioning;
    m.condition_last &= !a.no_last_conditioning;
    config.validate()?;
    println!("# train: resolved config\n{}", config.to_toml());
    let outcome = fit(config, a.resume.as_deref())?;
    if let Some(last) = outcome.rows.last() {
        println!(
            "final loss {:.6} after {} iterations",
            last.loss, last.iteration
        );
    }
    println!("checkpoint {}", outcome.checkpoint.display());
    println!("metrics {}", outcome.metrics.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let file: EvalFile = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut f: EvalFile =
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [&mut f.checkpoint, &mut f.list, &mut f.output_dir]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            f
        }
        None => EvalFile::default(),
    };
    let list = a
        .list
        .clone()
        .or(file.list)
        .ok_or_else(|| usage("eval needs --list (or `list` in the config)"))?;
    let out = output_dir(&a.out, file.output_dir)?;
    let crop_size = a.crop_size.or(file.crop_size).unwrap_or(64);
    let checkpoint = a.checkpoint.clone().or(file.checkpoint);
    let blending = !a.no_blending && file.blending.unwrap_or(true);
    let dilation = !a.no_dilation && file.dilation.unwrap_or(true);
    let upscaler = match a.method {
        MethodArg::Model => {
            let path = checkpoint
                .clone()
                .ok_or_else(|| usage("eval needs --checkpoint"))?;
            let mut model = Checkpoint::read(&path)?.model()?;
            model.config.use_blending = blending;
            model.config.use_dilation = dilation;
            Upscaler::Model(Box::new(model))
        }
        MethodArg::Bicubic | MethodArg::Oracle => {
            let scale = a
                .scale
                .or(file.scale)
                .ok_or_else(|| usage("bicubic and oracle need --scale"))?;
            if matches!(a.method, MethodArg::Bicubic) {
                Upscaler::Bicubic { scale }
            } else {
                Upscaler::Oracle { scale }
            }
        }
    };
    let scale = upscaler.scale();
    if let Some(s) = a.scale.or(file.scale) {
        if s != scale {
            bail!(usage(format!(
                "--scale {s} does not match the checkpoint's {scale}x"
            )));
        }
    }
    let resolved = EvalFile {
        checkpoint,
        list: Some(list.clone()),
        scale: Some(scale),
        output_dir: Some(out.clone()),
        crop_size: Some(crop_size),
        blending: Some(blending),
        dilation: Some(dilation),
    };
    echo("eval", &resolved)?;
    let segments = load_segments(&list, scale)?;
    let options = EvalOptions {
        output_dir: Some(out.clone()),
        crop_size,
    };
    let report = evaluate(&upscaler, &segments, &options)?;
    for r in &report.rows {
        println!(
            "{} segment {}: PSNR {:.3} dB (bicubic {:.3}), SSIM {:.4} (bicubic {:.4}){}",
            r.scene,
            r.segment,
            r.psnr,
            r.baseline_psnr,
            r.ssim,
            r.baseline_ssim,
            r.pixel_std
                .map(|p| format!(", static pixel std {p:.3}"))
                .unwrap_or_default()
        );
    }
    println!("{}", report.summary());
    println!("report {}", out.join("report.csv").display());
    Ok(())
}

fn upscale(a: UpscaleArgs) -> Result<()> {
    let out = output_dir(&a.out, None)?;
    echo("upscale", &a)?;
    let model = a.model.load()?;
    let frames = load_sequence(&a.manifest, model.config.scale)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let hr = Upscaler::Model(Box::new(model)).rollout(&frames)?;
    for (i, r) in hr.iter().enumerate() {
        match a.format {
            FormatArg::Png => write_color_png(r, &out.join(format!("frame_{i:04}.png")))?,
            FormatArg::Qras => write_raster(&out.join(format!("frame_{i:04}.qras")), r)?,
        }
    }
    println!("wrote {} frames to {}", hr.len(), out.display());
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<()> {
    echo("gradcheck", &a)?;
    let mut results = gradcheck::op_checks(a.seed)?;
    results.push(gradcheck::rollout_check(a.seed, a.frames)?);
    println!(
        "{:<22} {:>8} {:>14} {:>10}  status",
        "check", "coords", "max rel err", "tolerance"
    );
    let mut failed = 0;
    for r in &results {
        let ok = r.passed();
        failed += usize::from(!ok);
        println!(
            "{:<22} {:>8} {:>14.3e} {:>10.0e}  {}",
            r.name,
            r.checked,
            r.max_rel_error,
            r.tolerance,
            if ok { "pass" } else { "FAIL" }
        );
    }
    if failed > 0 {
        bail!("{failed} gradient check(s) failed");
    }
    Ok(())
}

fn profile_cmd(a: ProfileArgs) -> Result<()> {
    echo("profile", &a)?;
    let model = a.model.load()?;
    let t = profile(&model, a.height, a.width, a.steps, a.warmup)?;
    println!("stage            median ms");
    println!("mv dilation      {:>9.3}", t.mv_dilation_ms);
    println!("warping          {:>9.3}", t.warping_ms);
    println!("network          {:>9.3}", t.network_ms);
    println!("total            {:>9.3}", t.total_ms);
    println!("({} timed steps, {} warm-up)", t.steps, a.warmup);
    Ok(())
}
