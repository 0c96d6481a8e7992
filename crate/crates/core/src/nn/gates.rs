//! Attention gating blocks: the additive attention gate, channel attention
//! from pooled descriptors, and the co-attention gate that applies two
//! gates with the feature/gating roles swapped before channel refinement.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::nn::layers::Conv2d;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

/// Intermediate width of the additive gate: half the feature width,
/// floored at 8.
pub fn ag_intermediate_width(c_x: usize) -> usize {
    (c_x / 2).max(8)
}

/// Default channel-attention bottleneck reduction.
pub const CA_REDUCTION: usize = 8;

pub struct GateOutput {
    /// Input scaled by the attention map.
    pub gated: Var,
    /// Sigmoid attention map [B,1,H,W], values strictly in (0,1).
    pub attention: Var,
}

/// Additive attention gate: alpha = sigma(psi(conv_x(x) + conv_g(gate))),
/// output = x (elementwise) alpha.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    pub conv_x: Conv2d,
    pub conv_g: Conv2d,
    pub psi: Conv2d,
}

impl AttentionGate {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_x: usize,
        c_g: usize,
    ) -> Self {
        let f_int = ag_intermediate_width(c_x);
        let conv_x = Conv2d::new(store, rng, &path(prefix, "conv_x"), c_x, f_int, 1, 1, 0);
        let conv_g = Conv2d::new(store, rng, &path(prefix, "conv_g"), c_g, f_int, 1, 1, 0);
        let psi = Conv2d::new(store, rng, &path(prefix, "psi"), f_int, 1, 1, 1, 0);
        AttentionGate { conv_x, conv_g, psi }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        gate: Var,
    ) -> GateOutput {
        assert_eq!(
            &g.shape(x)[2..],
            &g.shape(gate)[2..],
            "attention gate needs spatially aligned inputs"
        );
        let fx = self.conv_x.forward(g, store, x);
        let fg = self.conv_g.forward(g, store, gate);
        let s = g.add(fx, fg);
        let logits = self.psi.forward(g, store, s);
        let attention = g.sigmoid(logits);
        let gated = g.mul(x, attention);
        GateOutput { gated, attention }
    }

    pub fn num_params(&self) -> usize {
        self.conv_x.num_params() + self.conv_g.num_params() + self.psi.num_params()
    }
}

/// Channel attention from global max and average descriptors, sharing one
/// bottleneck MLP (1x1 convs C -> C/r -> C) across the two pooling branches.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub fc1: Conv2d,
    pub fc2: Conv2d,
    pub channels: usize,
}

impl ChannelAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
        reduction: usize,
    ) -> Self {
        assert!(
            channels % reduction == 0,
            "channel attention: {channels} channels not divisible by reduction {reduction}"
        );
        let hidden = channels / reduction;
        let fc1 = Conv2d::new(store, rng, &path(prefix, "fc1"), channels, hidden, 1, 1, 0);
        let fc2 = Conv2d::new(store, rng, &path(prefix, "fc2"), hidden, channels, 1, 1, 0);
        ChannelAttention { fc1, fc2, channels }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        self.forward_with_scale(g, store, x).0
    }

    /// Returns (gated output, per-channel scale [B,C,1,1]).
    pub fn forward_with_scale<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> (Var, Var) {
        let amp = g.adaptive_pool_11(x, true);
        let aap = g.adaptive_pool_11(x, false);
        let b1 = self.mlp(g, store, amp);
        let b2 = self.mlp(g, store, aap);
        let s = g.add(b1, b2);
        let scale = g.sigmoid(s);
        (g.mul(x, scale), scale)
    }

    fn mlp<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, pooled: Var) -> Var {
        let h = self.fc1.forward(g, store, pooled);
        let h = g.relu(h);
        self.fc2.forward(g, store, h)
    }

    pub fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params()
    }
}

/// Co-attention gate: gates the encoder skip with the decoder features and
/// vice versa, concatenates both gated maps, refines channels, and projects
/// to the stage width.
#[derive(Debug, Clone)]
pub struct CoAttentionGate {
    pub ag_enc: AttentionGate,
    pub ag_dec: AttentionGate,
    pub ca: ChannelAttention,
    pub proj: Conv2d,
}

impl CoAttentionGate {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_enc: usize,
        c_dec: usize,
        c_out: usize,
    ) -> Self {
        let ag_enc = AttentionGate::new(store, rng, &path(prefix, "ag_enc"), c_enc, c_dec);
        let ag_dec = AttentionGate::new(store, rng, &path(prefix, "ag_dec"), c_dec, c_enc);
        let cat = c_enc + c_dec;
        let ca = ChannelAttention::new(store, rng, &path(prefix, "ca"), cat, ca_reduction_for(cat));
        let proj = Conv2d::new(store, rng, &path(prefix, "proj"), cat, c_out, 1, 1, 0);
        CoAttentionGate { ag_enc, ag_dec, ca, proj }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        skip: Var,
        dec: Var,
    ) -> Var {
        let enc_gated = self.ag_enc.forward(g, store, skip, dec).gated;
        let dec_gated = self.ag_dec.forward(g, store, dec, skip).gated;
        let cat = g.concat(&[enc_gated, dec_gated], 1);
        let refined = self.ca.forward(g, store, cat);
        self.proj.forward(g, store, refined)
    }

    pub fn num_params(&self) -> usize {
        self.ag_enc.num_params() + self.ag_dec.num_params() + self.ca.num_params()
            + self.proj.num_params()
    }
}

/// Largest divisor of `c` that is <= CA_REDUCTION, so odd concat widths
/// still get a valid bottleneck.
pub fn ca_reduction_for(c: usize) -> usize {
    (1..=CA_REDUCTION.min(c)).rev().find(|r| c % r == 0).unwrap_or(1)
}

/// Single-gate fusion, the ablation baseline: one attention gate on the
/// skip, concatenated with the decoder features, then the same-shaped 1x1
/// projection as the co-attention gate.
#[derive(Debug, Clone)]
pub struct AgFusion {
    pub ag: AttentionGate,
    pub proj: Conv2d,
}

impl AgFusion {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_enc: usize,
        c_dec: usize,
        c_out: usize,
    ) -> Self {
        let ag = AttentionGate::new(store, rng, &path(prefix, "ag"), c_enc, c_dec);
        let proj = Conv2d::new(store, rng, &path(prefix, "proj"), c_enc + c_dec, c_out, 1, 1, 0);
        AgFusion { ag, proj }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        skip: Var,
        dec: Var,
    ) -> Var {
        let gated = self.ag.forward(g, store, skip, dec).gated;
        let cat = g.concat(&[gated, dec], 1);
        self.proj.forward(g, store, cat)
    }

    pub fn num_params(&self) -> usize {
        self.ag.num_params() + self.proj.num_params()
    }
}
