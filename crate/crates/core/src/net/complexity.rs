//! Multiply-accumulate accounting at batch 1 (multiply by the batch size
//! for a step estimate). Conventions, applied consistently:
//!
//! - convolutions: Cout * Ho * Wo * Cin * k^2
//! - linear layers: rows * Cin * Cout
//! - depthwise 3x3: C * H * W * 9
//! - selective scan: L * C * N per direction (state update), plus its
//!   input projections counted as linear layers
//! - attention: 2 * heads * L * L_kv * d_head for the two products, plus
//!   the q/k/v/sr/proj convolutions
//! - deformable convolution: its tap contraction Cout * Cin * 9 * H * W
//!   plus the offset/mask convolutions; bilinear gathers and modulation
//!   are memory-bound and not counted
//! - pooling, normalization, activations, upsampling: not counted


use crate::net::config::ModelConfig;
use crate::net::decoder::Gate;
use crate::net::model::Model;
use crate::nn::deform::DeformableResidualBlock;
use crate::nn::dist_head::DistributionHead;
use crate::nn::gates::{AgFusion, AttentionGate, ChannelAttention, CoAttentionGate};
use crate::ssm::params::SsmParams;
use crate::ssm::Vssmb;

impl AttentionGate {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.conv_x.macs(h, w) + self.conv_g.macs(h, w) + self.psi.macs(h, w)
    }
}

impl ChannelAttention {
    pub fn macs(&self) -> u64 {
        // both pooled branches run the shared bottleneck at 1x1
        2 * (self.fc1.macs(1, 1) + self.fc2.macs(1, 1))
    }
}

impl CoAttentionGate {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.ag_enc.macs(h, w) + self.ag_dec.macs(h, w) + self.ca.macs() + self.proj.macs(h, w)
    }
}

impl AgFusion {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.ag.macs(h, w) + self.proj.macs(h, w)
    }
}

impl Gate {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        match self {
            Gate::Cag(c) => c.macs(h, w),
            Gate::Ag(a) => a.macs(h, w),
        }
    }
}

impl SsmParams {
    /// Per-position projections plus the scan state updates over all owned
    /// directions of a length-L sequence.
    pub fn macs(&self, l: usize) -> u64 {
        let dirs = self.dirs.len() as u64;
        let proj: u64 = self
            .dirs
            .iter()
            .map(|d| d.x_proj.macs(l) + d.dt_proj.macs(l))
            .sum();
        proj + dirs * (l * self.channels * self.state) as u64
    }
}

impl Vssmb {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.expand_proj.macs(h, w)
            + self.gate_proj.macs(h, w)
            + self.dw.macs(h, w)
            + self.ssm.macs(h * w)
            + self.out_proj.macs(h, w)
    }
}

impl DeformableResidualBlock {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let second = self.conv2.macs(h, w); // tap contraction, same count as standard conv
        self.conv1.macs(h, w)
            + second
            + self.offset_conv.as_ref().map_or(0, |c| c.macs(h, w))
            + self.mask_conv.as_ref().map_or(0, |c| c.macs(h, w))
            + self.skip_proj.as_ref().map_or(0, |c| c.macs(h, w))
    }
}

impl DistributionHead {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.dw.macs(h, w) + self.proj.macs(h, w)
    }
}

/// Exact trainable parameter count for a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    Model::<f32>::new(cfg.clone()).expect("valid config").count_params()
}

/// Multiply-accumulates of one batch-1 forward pass under the conventions
/// above.
pub fn count_flops(cfg: &ModelConfig) -> u64 {
    let model = Model::<f32>::new(cfg.clone()).expect("valid config");
    model.encoder.macs(cfg) + model.decoder.macs(cfg)
}

/// Scan state-update MACs alone for one sequence: L * C * N per direction.
pub fn scan_macs(l: usize, c: usize, n: usize, directions: usize) -> u64 {
    (l * c * n * directions) as u64
}

pub fn macs_to_gmac(macs: u64) -> f64 {
    macs as f64 / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Conv2d;
    use crate::param::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_param_and_mac_formulas() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::new(&mut store, &mut rng, "c", 16, 32, 3, 1, 1);
        assert_eq!(conv.num_params(), 4_640);
        assert_eq!(conv.macs(56, 56), 14_450_688);
    }

    #[test]
    fn scan_mac_formula() {
        assert_eq!(scan_macs(1024, 32, 16, 4), 1024 * 32 * 16 * 4);
    }

    #[test]
    fn count_params_matches_model_store() {
        let cfg = ModelConfig {
            input_size: (32, 32),
            stem_channels: 4,
            encoder_widths: [4, 8, 8, 8],
            encoder_blocks: [1, 1, 1, 1],
            encoder_heads: [1, 2, 2, 2],
            encoder_sr_ratios: [2, 2, 1, 1],
            encoder_mlp_ratio: 2,
            decoder_widths: [8, 8, 8, 8, 8, 8],
            ssm_state: 4,
            ..ModelConfig::desk(3, 1)
        };
        let model = Model::<f32>::new(cfg.clone()).unwrap();
        assert_eq!(count_params(&cfg), model.count_params());
        assert!(count_flops(&cfg) > 0);
    }

    #[test]
    fn deformable_counts_more_than_standard() {
        use crate::nn::deform::ConvKind;
        let base = ModelConfig {
            input_size: (32, 32),
            stem_channels: 4,
            encoder_widths: [4, 8, 8, 8],
            encoder_blocks: [1, 1, 1, 1],
            encoder_heads: [1, 2, 2, 2],
            encoder_sr_ratios: [2, 2, 1, 1],
            encoder_mlp_ratio: 2,
            decoder_widths: [8, 8, 8, 8, 8, 8],
            ssm_state: 4,
            ..ModelConfig::desk(3, 1)
        };
        let std_cfg = ModelConfig { conv: ConvKind::Standard, ..base.clone() };
        assert!(count_params(&base) > count_params(&std_cfg));
        assert!(count_flops(&base) > count_flops(&std_cfg));
    }
}
