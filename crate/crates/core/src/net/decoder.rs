//! Six-stage decoder. The bottleneck stage runs two VSSMB blocks and a
//! deformable residual block; stages D5..D2 fuse their encoder skip through
//! the gate, then VSSMB, then DRB; the final full-resolution stage keeps
//! the gate and DRB and maps to class logits with a 1x1 head. Each stage's
//! pre-upsample features feed a distribution head, giving five aux logit
//! maps from /32 up to /2. Upsampling between stages is bilinear x2
//! followed by a 1x1 width projection.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::net::config::{GateKind, ModelConfig, AUX_SCALES, BOTTLENECK_VSSMB};
use crate::net::encoder::FeaturePyramid;
use crate::nn::deform::DeformableResidualBlock;
use crate::nn::dist_head::DistributionHead;
use crate::nn::gates::{AgFusion, CoAttentionGate};
use crate::nn::layers::Conv2d;
use crate::nn::Mode;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

/// Final logits plus the aux maps ordered coarsest (s=1, /32) to finest
/// (s=5, /2).
pub struct SegOutput {
    pub logits: Var,
    pub aux: Vec<Var>,
}

#[derive(Debug, Clone)]
pub enum Gate {
    Cag(CoAttentionGate),
    Ag(AgFusion),
}

impl Gate {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        kind: GateKind,
        c_enc: usize,
        c_dec: usize,
        c_out: usize,
    ) -> Self {
        match kind {
            GateKind::Cag => {
                Gate::Cag(CoAttentionGate::new(store, rng, prefix, c_enc, c_dec, c_out))
            }
            GateKind::Ag => Gate::Ag(AgFusion::new(store, rng, prefix, c_enc, c_dec, c_out)),
        }
    }

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        skip: Var,
        dec: Var,
    ) -> Var {
        match self {
            Gate::Cag(cag) => cag.forward(g, store, skip, dec),
            Gate::Ag(ag) => ag.forward(g, store, skip, dec),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Gate::Cag(c) => c.num_params(),
            Gate::Ag(a) => a.num_params(),
        }
    }
}

struct MidStage {
    gate: Gate,
    vssmb: crate::ssm::Vssmb,
    drb: DeformableResidualBlock,
    aux_head: DistributionHead,
    upsample_proj: Conv2d,
}

pub struct Decoder {
    bottleneck_in: Option<Conv2d>,
    bottleneck_vssmb: Vec<crate::ssm::Vssmb>,
    bottleneck_drb: DeformableResidualBlock,
    bottleneck_aux: DistributionHead,
    bottleneck_up: Conv2d,
    mid: Vec<MidStage>,
    final_gate: Gate,
    final_drb: DeformableResidualBlock,
    seg_head: Conv2d,
}

impl Decoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cfg: &ModelConfig,
    ) -> Self {
        let n = cfg.num_classes;
        let dw = cfg.decoder_widths;
        let c6 = cfg.encoder_widths[3];
        let bottleneck_in = (c6 != dw[0]).then(|| {
            Conv2d::new(store, rng, &path(prefix, "bottleneck.in_proj"), c6, dw[0], 1, 1, 0)
        });
        let bottleneck_vssmb = (0..BOTTLENECK_VSSMB)
            .map(|i| {
                crate::ssm::Vssmb::new(
                    store,
                    rng,
                    &path(prefix, &format!("bottleneck.vssmb{i}")),
                    dw[0],
                    cfg.ssm_state,
                    cfg.scan_merge,
                )
            })
            .collect();
        let bottleneck_drb = DeformableResidualBlock::new(
            store,
            rng,
            &path(prefix, "bottleneck.drb"),
            dw[0],
            dw[0],
            cfg.conv,
        );
        let bottleneck_aux =
            DistributionHead::new(store, rng, &path(prefix, "bottleneck.aux"), dw[0], n);
        let bottleneck_up =
            Conv2d::new(store, rng, &path(prefix, "bottleneck.up_proj"), dw[0], dw[1], 1, 1, 0);

        // skips X5..X2 pair with stages D5..D2
        let skip_widths = [
            cfg.encoder_widths[2],
            cfg.encoder_widths[1],
            cfg.encoder_widths[0],
            cfg.stem_channels,
        ];
        let mid = (0..4)
            .map(|i| {
                let width = dw[i + 1];
                let next_width = dw[i + 2];
                let sp = path(prefix, &format!("stage{}", 5 - i));
                MidStage {
                    gate: Gate::new(
                        store,
                        rng,
                        &path(&sp, "gate"),
                        cfg.gate,
                        skip_widths[i],
                        width,
                        width,
                    ),
                    vssmb: crate::ssm::Vssmb::new(
                        store,
                        rng,
                        &path(&sp, "vssmb"),
                        width,
                        cfg.ssm_state,
                        cfg.scan_merge,
                    ),
                    drb: DeformableResidualBlock::new(
                        store,
                        rng,
                        &path(&sp, "drb"),
                        width,
                        width,
                        cfg.conv,
                    ),
                    aux_head: DistributionHead::new(store, rng, &path(&sp, "aux"), width, n),
                    upsample_proj: Conv2d::new(
                        store,
                        rng,
                        &path(&sp, "up_proj"),
                        width,
                        next_width,
                        1,
                        1,
                        0,
                    ),
                }
            })
            .collect();

        let final_gate = Gate::new(
            store,
            rng,
            &path(prefix, "stage1.gate"),
            cfg.gate,
            cfg.stem_channels,
            dw[5],
            dw[5],
        );
        let final_drb = DeformableResidualBlock::new(
            store,
            rng,
            &path(prefix, "stage1.drb"),
            dw[5],
            dw[5],
            cfg.conv,
        );
        let seg_head = Conv2d::new(store, rng, &path(prefix, "stage1.head"), dw[5], n, 1, 1, 0);
        Decoder {
            bottleneck_in,
            bottleneck_vssmb,
            bottleneck_drb,
            bottleneck_aux,
            bottleneck_up,
            mid,
            final_gate,
            final_drb,
            seg_head,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        pyr: &FeaturePyramid,
        mode: Mode,
    ) -> SegOutput {
        let mut aux = Vec::with_capacity(AUX_SCALES);
        let mut d = pyr.x6;
        if let Some(p) = &self.bottleneck_in {
            d = p.forward(g, store, d);
        }
        for v in &self.bottleneck_vssmb {
            d = v.forward(g, store, d);
        }
        d = self.bottleneck_drb.forward(g, store, d, mode);
        aux.push(self.bottleneck_aux.forward(g, store, d, mode));
        let up = g.upsample_x2(d);
        d = self.bottleneck_up.forward(g, store, up);

        let skips = pyr.skips();
        for (i, stage) in self.mid.iter().enumerate() {
            d = stage.gate.forward(g, store, skips[i], d);
            d = stage.vssmb.forward(g, store, d);
            d = stage.drb.forward(g, store, d, mode);
            aux.push(stage.aux_head.forward(g, store, d, mode));
            let up = g.upsample_x2(d);
            d = stage.upsample_proj.forward(g, store, up);
        }

        d = self.final_gate.forward(g, store, pyr.x1, d);
        d = self.final_drb.forward(g, store, d, mode);
        let logits = self.seg_head.forward(g, store, d);
        SegOutput { logits, aux }
    }

    pub fn num_params(&self) -> usize {
        self.bottleneck_in.as_ref().map_or(0, |c| c.num_params())
            + self.bottleneck_vssmb.iter().map(|v| v.num_params()).sum::<usize>()
            + self.bottleneck_drb.num_params()
            + self.bottleneck_aux.num_params()
            + self.bottleneck_up.num_params()
            + self
                .mid
                .iter()
                .map(|s| {
                    s.gate.num_params()
                        + s.vssmb.num_params()
                        + s.drb.num_params()
                        + s.aux_head.num_params()
                        + s.upsample_proj.num_params()
                })
                .sum::<usize>()
            + self.final_gate.num_params()
            + self.final_drb.num_params()
            + self.seg_head.num_params()
    }

    /// All gates in stage order (D5..D2 then D1), for parameter accounting.
    pub fn gates(&self) -> Vec<&Gate> {
        let mut v: Vec<&Gate> = self.mid.iter().map(|s| &s.gate).collect();
        v.push(&self.final_gate);
        v
    }

    /// Multiply-accumulates of one batch-1 forward pass (see the
    /// conventions in the complexity module).
    pub fn macs(&self, cfg: &ModelConfig) -> u64 {
        let mut total = 0u64;
        let (h6, w6) = cfg.stage_hw(0);
        if let Some(p) = &self.bottleneck_in {
            total += p.macs(h6, w6);
        }
        for v in &self.bottleneck_vssmb {
            total += v.macs(h6, w6);
        }
        total += self.bottleneck_drb.macs(h6, w6);
        total += self.bottleneck_aux.macs(h6, w6);
        total += self.bottleneck_up.macs(h6 * 2, w6 * 2);
        for (i, stage) in self.mid.iter().enumerate() {
            let (h, w) = cfg.stage_hw(i + 1);
            total += stage.gate.macs(h, w);
            total += stage.vssmb.macs(h, w);
            total += stage.drb.macs(h, w);
            total += stage.aux_head.macs(h, w);
            total += stage.upsample_proj.macs(h * 2, w * 2);
        }
        let (h1, w1) = cfg.stage_hw(5);
        total += self.final_gate.macs(h1, w1);
        total += self.final_drb.macs(h1, w1);
        total += self.seg_head.macs(h1, w1);
        total
    }
}
