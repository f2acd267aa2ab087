use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use super::config::TrainConfig;
use super::grad::batch_gradients;
use crate::data::{
    read_manifest_list, split_segments, ClipSampler, FrameBundle, SamplerState, Sequence,
};
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::model::{Checkpoint, Model};
use crate::raster::{Adam, AdamConfig, Param};

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    /// 1-based count of completed iterations.
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
    pub val_psnr: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,loss,lr,val_psnr";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        // Shortest round-trip formatting, so a resumed run reloads exact values.
        let val = r.val_psnr.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.loss, r.lr, val);
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let bad = |line: &str| Error::Format(format!("metrics row {line:?}"));
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("metrics log header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            Ok(MetricRow {
                iteration: f[0].parse().map_err(|_| bad(line))?,
                loss: f[1].parse().map_err(|_| bad(line))?,
                lr: f[2].parse().map_err(|_| bad(line))?,
                val_psnr: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad(line))?)
                },
            })
        })
        .collect()
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub rows: Vec<MetricRow>,
}

/// Mutable training state: model, optimizer, sampler and data.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: Adam,
    sampler: ClipSampler,
    /// Completed iterations.
    pub iteration: usize,
    pub rows: Vec<MetricRow>,
    train: Vec<Vec<FrameBundle>>,
    val: Vec<Vec<FrameBundle>>,
}

/// Loads the segments named in `config.train_list` and splits them per scene.
pub fn load_split(config: &TrainConfig) -> Result<(Vec<Vec<FrameBundle>>, Vec<Vec<FrameBundle>>)> {
    let paths = read_manifest_list(&config.train_list)?;
    let mut sequences = Vec::with_capacity(paths.len());
    for p in &paths {
        sequences.push(Sequence::open(p)?);
    }
    let (train, val) = if config.train_fraction >= 1.0 {
        (sequences, Vec::new())
    } else {
        split_segments(
            &sequences,
            |s| s.manifest.scene.as_str(),
            config.train_fraction,
            config.seed,
        )
    };
    info!(
        "{} training and {} validation segments",
        train.len(),
        val.len()
    );
    let load = |seqs: Vec<Sequence>| -> Result<Vec<Vec<FrameBundle>>> {
        seqs.iter()
            .map(|s| s.load_all(config.model.scale))
            .collect()
    };
    Ok((load(train)?, load(val)?))
}

impl Trainer {
    /// Fresh run on the dataset named in the config.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (train, val) = load_split(&config)?;
        let model = Model::init(config.model_config()?, config.seed)?;
        Self::from_parts(config, model, train, val)
    }

    /// Fresh run on in-memory sequences.
    pub fn from_parts(
        config: TrainConfig,
        model: Model,
        train: Vec<Vec<FrameBundle>>,
        val: Vec<Vec<FrameBundle>>,
    ) -> Result<Self> {
        config.validate()?;
        if model.config != config.model_config()? {
            return Err(Error::config("model does not match the train config"));
        }
        let adam = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &model.params,
        );
        Ok(Trainer {
            sampler: ClipSampler::new(config.seed),
            config,
            model,
            adam,
            iteration: 0,
            rows: Vec::new(),
            train,
            val,
        })
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: TrainConfig, checkpoint: &Path) -> Result<Self> {
        config.validate()?;
        let (train, val) = load_split(&config)?;
        let ck = Checkpoint::read(checkpoint)?;
        let mut t = Self::from_parts(config, ck.model()?, train, val)?;
        t.restore(&ck)?;
        let metrics = t.metrics_path();
        if metrics.exists() {
            let text = fs::read_to_string(&metrics).map_err(|e| Error::io(&metrics, e))?;
            t.rows = parse_metrics_csv(&text)?;
            t.rows.retain(|r| r.iteration <= t.iteration);
        }
        Ok(t)
    }

    /// Restores optimizer, sampler and iteration from checkpoint metadata.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let model = ck.model()?;
        if model.config != self.model.config {
            return Err(Error::config(
                "checkpoint model config differs from the train config",
            ));
        }
        self.model = model;
        let field = |key: &str| -> Result<&str> {
            ck.meta(key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks training state {key}")))
        };
        let num = |key: &str| -> Result<u128> {
            field(key)?
                .parse()
                .map_err(|_| Error::Format(format!("checkpoint field {key} is not a number")))
        };
        self.iteration = num("train.iteration")? as usize;
        self.adam.step = num("adam.step")? as u64;
        self.sampler = ClipSampler::restore(SamplerState {
            seed: num("sampler.seed")? as u64,
            word_pos: num("sampler.word_pos")?,
            epoch: num("sampler.epoch")? as u64,
            cursor: num("sampler.cursor")? as usize,
        });
        let extra = ck.extra_arrays();
        for (i, p) in self.model.params.iter().enumerate() {
            for (prefix, dst) in [
                ("adam.m.", &mut self.adam.first_moment[i]),
                ("adam.v.", &mut self.adam.second_moment[i]),
            ] {
                let name = format!("{prefix}{}", p.name);
                let src = extra
                    .iter()
                    .find(|a| a.name == name)
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))?;
                if src.data.len() != dst.len() {
                    return Err(Error::Format(format!("{name} has the wrong length")));
                }
                dst.copy_from_slice(&src.data);
            }
        }
        Ok(())
    }

    /// Model, Adam moments and sampler position.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        let s = self.sampler.state();
        ck.meta = vec![
            ("train.iteration".into(), self.iteration.to_string()),
            ("adam.step".into(), self.adam.step.to_string()),
            ("sampler.seed".into(), s.seed.to_string()),
            ("sampler.word_pos".into(), s.word_pos.to_string()),
            ("sampler.epoch".into(), s.epoch.to_string()),
            ("sampler.cursor".into(), s.cursor.to_string()),
        ];
        for (prefix, moments) in [
            ("adam.m.", &self.adam.first_moment),
            ("adam.v.", &self.adam.second_moment),
        ] {
            for (p, m) in self.model.params.iter().zip(moments) {
                ck.arrays.push(Param {
                    name: format!("{prefix}{}", p.name),
                    dims: p.dims.clone(),
                    data: m.clone(),
                });
            }
        }
        ck
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.config.output_dir.join("metrics.csv")
    }

    pub fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.config
            .output_dir
            .join(format!("checkpoint_{iteration:06}.qssc"))
    }

    /// Runs one optimizer step and returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.iteration;
        let batch = self.sampler.sample(&self.train, self.config.clip_spec())?;
        let clips: Vec<Vec<FrameBundle>> = batch.clips.into_iter().map(|c| c.frames).collect();
        let (loss, grads) = batch_gradients(&self.model, &clips)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                iteration: it as u64,
                message: format!("loss is {loss}"),
            });
        }
        if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training {
                iteration: it as u64,
                message: format!(
                    "non-finite gradient for {}",
                    self.model.params.by_index(i).name
                ),
            });
        }
        let lr = self.config.lr_at(it);
        self.adam.set_lr(lr);
        self.adam.update(&mut self.model.params, &grads)?;
        if !self.model.params.all_finite() {
            return Err(Error::Training {
                iteration: it as u64,
                message: "parameters became non-finite".into(),
            });
        }
        self.iteration += 1;
        self.rows.push(MetricRow {
            iteration: self.iteration,
            loss: loss as f64,
            lr,
            val_psnr: None,
        });
        Ok(loss as f64)
    }

    /// Mean per-frame PSNR of full-sequence rollouts on the validation
    /// segments, or `None` without validation data.
    pub fn validate(&self) -> Result<Option<f64>> {
        validation_psnr(&self.model, &self.val)
    }

    fn due(every: usize, it: usize, last: usize) -> bool {
        it == last || (every > 0 && it % every == 0)
    }

    fn write_metrics(&self) -> Result<PathBuf> {
        let path = self.metrics_path();
        fs::write(&path, metrics_csv(&self.rows)).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Trains until `config.iterations`, validating, logging and writing
    /// checkpoints on the configured cadence.
    pub fn run(&mut self) -> Result<TrainOutcome> {
        let dir = self.config.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let cfg_path = dir.join("train.toml");
        fs::write(&cfg_path, self.config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
        let total = self.config.iterations;
        let mut last_ckpt = None;
        while self.iteration < total {
            let loss = self.step()?;
            let it = self.iteration;
            if Self::due(self.config.validate_every, it, total) {
                let v = self.validate()?;
                if let Some(row) = self.rows.last_mut() {
                    row.val_psnr = v;
                }
                info!(
                    "iteration {it}: loss {loss:.5}, lr {:e}, validation PSNR {}",
                    self.config.lr_at(it - 1),
                    v.map(|v| format!("{v:.3} dB"))
                        .unwrap_or_else(|| "n/a".into())
                );
            } else if it % 50 == 0 {
                info!("iteration {it}: loss {loss:.5}");
            }
            if Self::due(self.config.checkpoint_every, it, total) {
                let path = self.checkpoint_path(it);
                self.checkpoint().write(&path)?;
                self.write_metrics()?;
                last_ckpt = Some(path);
            }
        }
        let final_path = dir.join("final.qssc");
        Checkpoint::from_model(&self.model).write(&final_path)?;
        if last_ckpt.is_none() {
            let path = self.checkpoint_path(self.iteration);
            self.checkpoint().write(&path)?;
        }
        let metrics = self.write_metrics()?;
        Ok(TrainOutcome {
            checkpoint: final_path,
            metrics,
            rows: self.rows.clone(),
        })
    }
}

/// Mean per-frame PSNR of clamped rollouts against the HR targets.
pub fn validation_psnr(model: &Model, sequences: &[Vec<FrameBundle>]) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for seq in sequences {
        let out = model.rollout(seq)?;
        for (y, f) in out.iter().zip(seq) {
            let Some(t) = &f.hr_target else { continue };
            let p = psnr(&y.map(|v| v.clamp(0.0, 1.0)), t)?;
            sum += p.min(100.0);
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Trains from scratch, or resumes from `resume` when given.
pub fn fit(config: TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = match resume {
        Some(p) => Trainer::resume(config, p)?,
        None => Trainer::new(config)?,
    };
    trainer.run()
}
