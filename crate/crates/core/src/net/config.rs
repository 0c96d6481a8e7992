//! Model configuration: everything needed to rebuild a network
//! bit-identically, including the ablation switches.

use crate::loss::{default_lambdas, Supervision};
use crate::nn::deform::ConvKind;
use crate::ssm::MergeMode;
use serde::{Deserialize, Serialize};

/// Number of aux supervision scales (decoder stages D6..D2).
pub const AUX_SCALES: usize = 5;
/// VSSMB blocks applied at the bottleneck stage.
pub const BOTTLENECK_VSSMB: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    #[default]
    Cag,
    Ag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// (H, W), both divisible by 32.
    pub input_size: (usize, usize),
    pub in_channels: usize,
    pub num_classes: usize,
    /// Full-resolution stem width (X1, X2 channels).
    pub stem_channels: usize,
    /// Hierarchy widths at strides /4, /8, /16, /32.
    pub encoder_widths: [usize; 4],
    pub encoder_blocks: [usize; 4],
    pub encoder_heads: [usize; 4],
    /// Key/value spatial reduction per stage.
    pub encoder_sr_ratios: [usize; 4],
    pub encoder_mlp_ratio: usize,
    /// Decoder widths for stages D6 (bottleneck) down to D1 (full res).
    pub decoder_widths: [usize; 6],
    pub ssm_state: usize,
    #[serde(default)]
    pub gate: GateKind,
    #[serde(default)]
    pub conv: ConvKind,
    #[serde(default)]
    pub supervision: Supervision,
    #[serde(default)]
    pub scan_merge: MergeMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda_vec")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub reverse_scale_weights: bool,
    pub seed: u64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_lambda_vec() -> Vec<f64> {
    default_lambdas(AUX_SCALES)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("input size {0}x{1} must be divisible by 32")]
    InputSize(usize, usize),
    #[error("num_classes must be >= 2, got {0}")]
    NumClasses(usize),
    #[error("lambdas must have {expected} strictly increasing entries, got {got:?}")]
    Lambdas { expected: usize, got: Vec<f64> },
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("encoder width {width} at stage {stage} not divisible by {heads} heads")]
    Heads { stage: usize, width: usize, heads: usize },
    #[error("stage {stage} spatial extent {extent} not divisible by sr ratio {sr}")]
    SrRatio { stage: usize, extent: usize, sr: usize },
    #[error("{0} must be positive")]
    ZeroField(&'static str),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(ConfigError::InputSize(h, w));
        }
        if self.num_classes < 2 {
            return Err(ConfigError::NumClasses(self.num_classes));
        }
        if self.lambdas.len() != AUX_SCALES
            || !self.lambdas.windows(2).all(|p| p[0] < p[1])
        {
            return Err(ConfigError::Lambdas {
                expected: AUX_SCALES,
                got: self.lambdas.clone(),
            });
        }
        if self.alpha <= 0.0 {
            return Err(ConfigError::Alpha(self.alpha));
        }
        for field in [
            ("in_channels", self.in_channels),
            ("stem_channels", self.stem_channels),
            ("ssm_state", self.ssm_state),
            ("encoder_mlp_ratio", self.encoder_mlp_ratio),
        ] {
            if field.1 == 0 {
                return Err(ConfigError::ZeroField(field.0));
            }
        }
        for s in 0..4 {
            if self.encoder_widths[s] % self.encoder_heads[s] != 0 {
                return Err(ConfigError::Heads {
                    stage: s,
                    width: self.encoder_widths[s],
                    heads: self.encoder_heads[s],
                });
            }
            let stride = 4 << s;
            let extent = (h / stride).min(w / stride);
            if extent % self.encoder_sr_ratios[s] != 0 {
                return Err(ConfigError::SrRatio {
                    stage: s,
                    extent,
                    sr: self.encoder_sr_ratios[s],
                });
            }
        }
        Ok(())
    }

    /// Spatial size of decoder stage i, i = 0 for D6 (stride 32) .. 5 for D1.
    pub fn stage_hw(&self, stage: usize) -> (usize, usize) {
        let stride = 32 >> stage;
        (self.input_size.0 / stride, self.input_size.1 / stride)
    }

    /// Standard-size preset (224 inputs, PVT-B0-scale widths).
    pub fn v0(num_classes: usize, in_channels: usize) -> Self {
        ModelConfig {
            input_size: (224, 224),
            in_channels,
            num_classes,
            stem_channels: 16,
            encoder_widths: [32, 64, 160, 256],
            encoder_blocks: [2, 2, 2, 2],
            encoder_heads: [1, 2, 5, 8],
            encoder_sr_ratios: [8, 4, 2, 1],
            encoder_mlp_ratio: 4,
            decoder_widths: [256, 160, 96, 64, 32, 16],
            ssm_state: 16,
            gate: GateKind::Cag,
            conv: ConvKind::Deformable,
            supervision: Supervision::DiceMsda,
            scan_merge: MergeMode::Sum,
            alpha: 1.0,
            lambdas: default_lambdas(AUX_SCALES),
            reverse_scale_weights: false,
            seed: 0,
        }
    }

    /// Larger preset (PVT-B2-scale widths and depths).
    pub fn v1(num_classes: usize, in_channels: usize) -> Self {
        ModelConfig {
            stem_channels: 32,
            encoder_widths: [64, 128, 320, 512],
            encoder_blocks: [3, 4, 6, 3],
            encoder_heads: [1, 2, 5, 8],
            decoder_widths: [512, 320, 160, 96, 64, 32],
            ..Self::v0(num_classes, in_channels)
        }
    }

    /// CPU desk preset: the V0 stage layout at reduced widths and 96x96
    /// inputs, sized for the synthetic training experiment.
    pub fn desk(num_classes: usize, in_channels: usize) -> Self {
        ModelConfig {
            input_size: (96, 96),
            stem_channels: 8,
            encoder_widths: [16, 32, 48, 96],
            encoder_blocks: [2, 2, 2, 2],
            encoder_heads: [1, 2, 4, 8],
            encoder_sr_ratios: [8, 4, 1, 1],
            encoder_mlp_ratio: 2,
            decoder_widths: [96, 64, 48, 32, 16, 8],
            ..Self::v0(num_classes, in_channels)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::v0(9, 1).validate().unwrap();
        ModelConfig::v1(9, 3).validate().unwrap();
        ModelConfig::desk(4, 1).validate().unwrap();
    }

    #[test]
    fn rejects_bad_input_size() {
        let mut c = ModelConfig::desk(4, 1);
        c.input_size = (100, 96);
        assert!(matches!(c.validate(), Err(ConfigError::InputSize(100, 96))));
    }

    #[test]
    fn rejects_non_increasing_lambdas() {
        let mut c = ModelConfig::desk(4, 1);
        c.lambdas = vec![0.2, 0.2, 0.3, 0.4, 0.5];
        assert!(matches!(c.validate(), Err(ConfigError::Lambdas { .. })));
        c.lambdas = vec![0.1, 0.2, 0.3];
        assert!(matches!(c.validate(), Err(ConfigError::Lambdas { .. })));
    }

    #[test]
    fn stage_hw_strides() {
        let c = ModelConfig::desk(4, 1);
        assert_eq!(c.stage_hw(0), (3, 3)); // D6 at /32
        assert_eq!(c.stage_hw(4), (48, 48)); // D2 at /2
        assert_eq!(c.stage_hw(5), (96, 96)); // D1 full
    }

    #[test]
    fn json_roundtrip_and_unknown_key_rejection() {
        let c = ModelConfig::v0(4, 1);
        let s = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
        let bad = s.replace("\"seed\":0", "\"seed\":0,\"unknown_key\":1");
        assert!(serde_json::from_str::<ModelConfig>(&bad).is_err());
    }
}
