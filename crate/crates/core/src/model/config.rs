use crate::error::{Error, Result};
use crate::raster::ConvKernel;
use crate::warp::{WarpOptions, DILATION_BLOCK};

/// Hidden width of the kernel-predicting MLPs.
pub const MLP_HIDDEN: usize = 2048;
/// Dense layers per kernel-predicting MLP.
pub const MLP_LAYERS: usize = 7;

/// Network shape and ablation switches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub scale: usize,
    /// Channels of the intermediate convolutions.
    pub features: usize,
    /// Number of intermediate f→f convolutions.
    pub layers: usize,
    /// "S", "M", "L" or "custom".
    pub variant: String,
    pub use_dilation: bool,
    pub use_blending: bool,
    /// Predict the first convolution's kernel from the jitter offset.
    pub condition_first: bool,
    /// Predict the last convolution's kernel from the jitter offset.
    pub condition_last: bool,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,
}

const KEYS: [&str; 10] = [
    "scale",
    "features",
    "layers",
    "variant",
    "use_dilation",
    "use_blending",
    "condition_first",
    "condition_last",
    "mlp_hidden",
    "mlp_layers",
];

impl ModelConfig {
    /// Named variant: S = (16, 1), M = (32, 3), L = (64, 5).
    pub fn variant(name: &str, scale: usize) -> Result<Self> {
        let (features, layers) = match name {
            "S" | "s" => (16, 1),
            "M" | "m" => (32, 3),
            "L" | "l" => (64, 5),
            _ => {
                return Err(Error::config(format!(
                    "unknown variant {name:?}; expected S, M or L"
                )))
            }
        };
        let config = ModelConfig {
            variant: name.to_ascii_uppercase(),
            ..Self::custom(scale, features, layers)
        };
        config.validate()?;
        Ok(config)
    }

    pub fn custom(scale: usize, features: usize, layers: usize) -> Self {
        ModelConfig {
            scale,
            features,
            layers,
            variant: "custom".into(),
            use_dilation: true,
            use_blending: true,
            condition_first: true,
            condition_last: true,
            mlp_hidden: MLP_HIDDEN,
            mlp_layers: MLP_LAYERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::config(format!("scale {} not in 2..=4", self.scale)));
        }
        if self.features == 0 || self.mlp_hidden == 0 || self.mlp_layers < 2 {
            return Err(Error::config(
                "features and mlp_hidden must be positive, mlp_layers at least 2",
            ));
        }
        Ok(())
    }

    /// `C (3) + D (1) + packed history (4·S²)`.
    pub fn first_in(&self) -> usize {
        4 + 4 * self.scale * self.scale
    }

    /// Candidate (3·S²), alpha (S²) and feature (S²) channels.
    pub fn last_out(&self) -> usize {
        5 * self.scale * self.scale
    }

    pub fn first_kernel_len(&self) -> usize {
        ConvKernel::<f32>::flat_len(self.features, self.first_in())
    }

    pub fn last_kernel_len(&self) -> usize {
        ConvKernel::<f32>::flat_len(self.last_out(), self.features)
    }

    pub fn warp_options(&self) -> WarpOptions {
        WarpOptions {
            use_dilation: self.use_dilation,
            block: DILATION_BLOCK,
        }
    }

    /// Canonical `key=value` lines in a fixed order.
    pub fn to_record(&self) -> String {
        let values = [
            self.scale.to_string(),
            self.features.to_string(),
            self.layers.to_string(),
            self.variant.clone(),
            self.use_dilation.to_string(),
            self.use_blending.to_string(),
            self.condition_first.to_string(),
            self.condition_last.to_string(),
            self.mlp_hidden.to_string(),
            self.mlp_layers.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parses the lines written by [`ModelConfig::to_record`]; any other
    /// `key=value` lines are returned in order.
    pub fn from_record(text: &str) -> Result<(Self, Vec<(String, String)>)> {
        let mut found: [Option<String>; 10] = Default::default();
        let mut extra = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line without '=': {line:?}")))?;
            match KEYS.iter().position(|key| *key == k) {
                Some(i) => found[i] = Some(v.to_string()),
                None => extra.push((k.to_string(), v.to_string())),
            }
        }
        let get = |i: usize| {
            found[i]
                .clone()
                .ok_or_else(|| Error::Format(format!("config record lacks {}", KEYS[i])))
        };
        let num = |i: usize| -> Result<usize> {
            get(i)?
                .parse()
                .map_err(|_| Error::Format(format!("config field {} is not an integer", KEYS[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            get(i)?
                .parse()
                .map_err(|_| Error::Format(format!("config field {} is not a boolean", KEYS[i])))
        };
        let config = ModelConfig {
            scale: num(0)?,
            features: num(1)?,
            layers: num(2)?,
            variant: get(3)?,
            use_dilation: flag(4)?,
            use_blending: flag(5)?,
            condition_first: flag(6)?,
            condition_last: flag(7)?,
            mlp_hidden: num(8)?,
            mlp_layers: num(9)?,
        };
        config.validate()?;
        Ok((config, extra))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_arithmetic() {
        for s in 2..=4 {
            let c = ModelConfig::variant("M", s).unwrap();
            assert_eq!(c.first_in(), 4 + 4 * s * s);
            assert_eq!(c.last_out(), 5 * s * s);
            assert_eq!((c.features, c.layers), (32, 3));
        }
        assert!(ModelConfig::variant("XL", 2).is_err());
        assert!(ModelConfig::variant("S", 5).is_err());
    }

    #[test]
    fn record_round_trip() {
        let mut c = ModelConfig::variant("L", 3).unwrap();
        c.use_blending = false;
        let text = c.to_record() + "train.iteration=5\n";
        let (back, extra) = ModelConfig::from_record(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            extra,
            vec![("train.iteration".to_string(), "5".to_string())]
        );
        assert!(ModelConfig::from_record("scale=2\n").is_err());
    }
}
