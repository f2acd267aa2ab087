use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ClipSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, MLP_HIDDEN, MLP_LAYERS};

/// Model section of a training config file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "S", "M", "L" or "custom".
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_scale")]
    pub scale: usize,
    /// Required for "custom", otherwise taken from the variant.
    #[serde(default)]
    pub features: Option<usize>,
    #[serde(default)]
    pub layers: Option<usize>,
    #[serde(default = "yes")]
    pub use_dilation: bool,
    #[serde(default = "yes")]
    pub use_blending: bool,
    #[serde(default = "yes")]
    pub condition_first: bool,
    #[serde(default = "yes")]
    pub condition_last: bool,
    #[serde(default = "default_hidden")]
    pub mlp_hidden: usize,
    #[serde(default = "default_mlp_layers")]
    pub mlp_layers: usize,
}

fn default_variant() -> String {
    "S".into()
}
fn default_scale() -> usize {
    2
}
fn yes() -> bool {
    true
}
fn default_hidden() -> usize {
    MLP_HIDDEN
}
fn default_mlp_layers() -> usize {
    MLP_LAYERS
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: default_variant(),
            scale: default_scale(),
            features: None,
            layers: None,
            use_dilation: true,
            use_blending: true,
            condition_first: true,
            condition_last: true,
            mlp_hidden: MLP_HIDDEN,
            mlp_layers: MLP_LAYERS,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let mut config = if self.variant.eq_ignore_ascii_case("custom") {
            let (Some(f), Some(m)) = (self.features, self.layers) else {
                return Err(Error::config(
                    "model.variant = \"custom\" needs model.features and model.layers",
                ));
            };
            ModelConfig::custom(self.scale, f, m)
        } else {
            let mut c = ModelConfig::variant(&self.variant, self.scale)?;
            if let Some(f) = self.features {
                c.features = f;
            }
            if let Some(m) = self.layers {
                c.layers = m;
            }
            c
        };
        config.use_dilation = self.use_dilation;
        config.use_blending = self.use_blending;
        config.condition_first = self.condition_first;
        config.condition_last = self.condition_last;
        config.mlp_hidden = self.mlp_hidden;
        config.mlp_layers = self.mlp_layers;
        config.validate()?;
        Ok(config)
    }
}

/// Training run settings, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub iterations: usize,
    /// Iterations after which the learning rate halves.
    pub milestones: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    pub clip_len: usize,
    pub hr_crop: usize,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    /// Validate every this many iterations (0: only at the end).
    pub validate_every: usize,
    /// JSON list of training segment manifests.
    pub train_list: PathBuf,
    /// Share of each scene's segments used for training; the rest validate.
    pub train_fraction: f64,
    pub output_dir: PathBuf,
}

impl TrainConfig {
    /// Desk-scale defaults: 5k iterations, halving at 2k and 4k, batch 4,
    /// 16-frame clips, 96px HR crops.
    pub fn desk(train_list: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            model: ModelSection::default(),
            iterations: 5000,
            milestones: vec![2000, 4000],
            lr: 1e-4,
            batch: 4,
            clip_len: 16,
            hr_crop: 96,
            seed: 0,
            checkpoint_every: 1000,
            validate_every: 500,
            train_list: train_list.into(),
            train_fraction: 0.8,
            output_dir: output_dir.into(),
        }
    }

    /// Full-size schedule: 500k iterations, halving at 200k and 400k,
    /// batch 8, 264px crops.
    pub fn full(train_list: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            iterations: 500_000,
            milestones: vec![200_000, 400_000],
            batch: 8,
            hr_crop: 264,
            checkpoint_every: 10_000,
            validate_every: 5_000,
            ..Self::desk(train_list, output_dir)
        }
    }

    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: TrainConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("train config: {e}")))?;
        if config.train_list.is_relative() {
            config.train_list = base_dir.join(&config.train_list);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base_dir.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::data(path, m),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.to_config()
    }

    pub fn clip_spec(&self) -> ClipSpec {
        ClipSpec {
            clip_len: self.clip_len,
            hr_crop: self.hr_crop,
            batch: self.batch,
            scale: self.model.scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?;
        self.clip_spec().validate()?;
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr {} must be positive", self.lr)));
        }
        for w in self.milestones.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::config(format!(
                    "milestones {:?} must be strictly increasing",
                    self.milestones
                )));
            }
        }
        if self
            .milestones
            .iter()
            .any(|&m| m == 0 || m >= self.iterations)
        {
            return Err(Error::config(format!(
                "milestones {:?} must lie in 1..{}",
                self.milestones, self.iterations
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::config(format!(
                "train_fraction {} not in (0, 1]",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Learning rate for 0-based `iteration`: halved once for every
    /// milestone already passed.
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| iteration >= m).count();
        self.lr * 0.5f64.powi(passed as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_at_milestones() {
        let c = TrainConfig::desk("t.json", "out");
        assert_eq!(c.lr_at(0), 1e-4);
        assert_eq!(c.lr_at(1999), 1e-4);
        assert_eq!(c.lr_at(2000), 5e-5);
        assert_eq!(c.lr_at(3999), 5e-5);
        assert_eq!(c.lr_at(4000), 2.5e-5);
        assert_eq!(c.lr_at(4999), 2.5e-5);
    }

    #[test]
    fn toml_round_trip_and_relative_paths() {
        let c = TrainConfig::desk("/abs/train.json", "/abs/out");
        let back = TrainConfig::from_toml(&c.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
        let text = c.to_toml().replace("/abs/train.json", "data/train.json");
        let rel = TrainConfig::from_toml(&text, Path::new("/cfg")).unwrap();
        assert_eq!(rel.train_list, PathBuf::from("/cfg/data/train.json"));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = TrainConfig::desk("t.json", "out");
        assert!(base.validate().is_ok());
        let bad = TrainConfig {
            milestones: vec![4000, 2000],
            ..base.clone()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            milestones: vec![2000, 5000],
            ..base.clone()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            hr_crop: 90,
            ..base.clone()
        };
        assert!(bad.validate().is_err());
        let text = base.to_toml() + "\nunknown_key = 3\n";
        assert!(TrainConfig::from_toml(&text, Path::new("")).is_err());
    }

    #[test]
    fn model_section_variants() {
        let m = ModelSection::default().to_config().unwrap();
        assert_eq!((m.features, m.layers, m.scale), (16, 1, 2));
        let custom = ModelSection {
            variant: "custom".into(),
            features: Some(4),
            layers: Some(1),
            mlp_hidden: 8,
            mlp_layers: 3,
            ..Default::default()
        };
        let c = custom.to_config().unwrap();
        assert_eq!(
            (c.features, c.layers, c.mlp_hidden, c.mlp_layers),
            (4, 1, 8, 3)
        );
        let missing = ModelSection {
            variant: "custom".into(),
            ..Default::default()
        };
        assert!(missing.to_config().is_err());
    }

    #[test]
    fn full_schedule_is_expressible() {
        let c = TrainConfig::full("t.json", "out");
        assert!(c.validate().is_ok());
        assert_eq!(c.lr_at(200_000), 5e-5);
        assert_eq!(c.lr_at(400_000), 2.5e-5);
    }
}
