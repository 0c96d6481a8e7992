//! Hierarchical encoder: the full-resolution CNN stem plus four
//! transformer-style stages (strided-conv patch merging, then blocks of
//! spatial-reduction attention with a depthwise-conv MLP) producing the
//! /4../32 feature pyramid.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::net::config::ModelConfig;
use crate::nn::layers::{Conv2d, DepthwiseConv2d, LayerNorm2d};
use crate::nn::stem::CnnStem;
use crate::nn::Mode;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

/// The six encoder outputs at full, /2, /4, /8, /16 and /32 resolution.
pub struct FeaturePyramid {
    pub x1: Var,
    pub x2: Var,
    pub x3: Var,
    pub x4: Var,
    pub x5: Var,
    pub x6: Var,
}

impl FeaturePyramid {
    pub fn skips(&self) -> [Var; 5] {
        [self.x5, self.x4, self.x3, self.x2, self.x1]
    }
}

/// Multi-head attention with spatially reduced keys/values followed by a
/// depthwise-conv MLP, both behind residuals.
#[derive(Debug, Clone)]
pub struct SraBlock {
    pub norm1: LayerNorm2d,
    pub q: Conv2d,
    pub k: Conv2d,
    pub v: Conv2d,
    pub proj: Conv2d,
    pub sr: Option<(Conv2d, LayerNorm2d)>,
    pub norm2: LayerNorm2d,
    pub fc1: Conv2d,
    pub dw: DepthwiseConv2d,
    pub fc2: Conv2d,
    pub heads: usize,
    pub channels: usize,
}

impl SraBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
        heads: usize,
        sr_ratio: usize,
        mlp_ratio: usize,
    ) -> Self {
        assert!(channels % heads == 0, "attention width {channels} not divisible by {heads}");
        let norm1 = LayerNorm2d::new(store, &path(prefix, "norm1"), channels);
        let q = Conv2d::new(store, rng, &path(prefix, "q"), channels, channels, 1, 1, 0);
        let k = Conv2d::new(store, rng, &path(prefix, "k"), channels, channels, 1, 1, 0);
        let v = Conv2d::new(store, rng, &path(prefix, "v"), channels, channels, 1, 1, 0);
        let proj = Conv2d::new(store, rng, &path(prefix, "proj"), channels, channels, 1, 1, 0);
        let sr = (sr_ratio > 1).then(|| {
            (
                Conv2d::new(store, rng, &path(prefix, "sr"), channels, channels, sr_ratio, sr_ratio, 0),
                LayerNorm2d::new(store, &path(prefix, "sr_norm"), channels),
            )
        });
        let norm2 = LayerNorm2d::new(store, &path(prefix, "norm2"), channels);
        let hidden = channels * mlp_ratio;
        let fc1 = Conv2d::new(store, rng, &path(prefix, "fc1"), channels, hidden, 1, 1, 0);
        let dw = DepthwiseConv2d::new(store, rng, &path(prefix, "dw"), hidden);
        let fc2 = Conv2d::new(store, rng, &path(prefix, "fc2"), hidden, channels, 1, 1, 0);
        SraBlock { norm1, q, k, v, proj, sr, norm2, fc1, dw, fc2, heads, channels }
    }

    fn attention<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let s = g.shape(x).to_vec();
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let heads = self.heads;
        let dh = c / heads;
        let l = h * w;
        let q = self.q.forward(g, store, x);
        let kv_src = match &self.sr {
            Some((conv, norm)) => {
                let r = conv.forward(g, store, x);
                norm.forward(g, store, r)
            }
            None => x,
        };
        let kvs = g.shape(kv_src).to_vec();
        let l_kv = kvs[2] * kvs[3];
        let k = self.k.forward(g, store, kv_src);
        let v = self.v.forward(g, store, kv_src);
        // [B,C,H,W] -> [B*heads, L, dh]
        let q = g.reshape(q, &[b * heads, dh, l]);
        let q = g.permute(q, &[0, 2, 1]);
        let k = g.reshape(k, &[b * heads, dh, l_kv]);
        let v = g.reshape(v, &[b * heads, dh, l_kv]);
        let v = g.permute(v, &[0, 2, 1]); // [BH, Lkv, dh]
        let scores = g.bmm(q, k); // [BH, L, Lkv]
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let lsm = g.log_softmax(scores, 2);
        let attn = g.exp(lsm);
        let ctx = g.bmm(attn, v); // [BH, L, dh]
        let ctx = g.permute(ctx, &[0, 2, 1]); // [BH, dh, L]
        let ctx = g.reshape(ctx, &[b, c, h, w]);
        self.proj.forward(g, store, ctx)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let n1 = self.norm1.forward(g, store, x);
        let a = self.attention(g, store, n1);
        let x = g.add(x, a);
        let n2 = self.norm2.forward(g, store, x);
        let m = self.fc1.forward(g, store, n2);
        let m = self.dw.forward(g, store, m);
        let m = g.silu(m);
        let m = self.fc2.forward(g, store, m);
        g.add(x, m)
    }

    pub fn num_params(&self) -> usize {
        self.norm1.num_params()
            + self.q.num_params()
            + self.k.num_params()
            + self.v.num_params()
            + self.proj.num_params()
            + self.sr.as_ref().map_or(0, |(c, n)| c.num_params() + n.num_params())
            + self.norm2.num_params()
            + self.fc1.num_params()
            + self.dw.num_params()
            + self.fc2.num_params()
    }

    /// Multiply-accumulate count at spatial size (h, w): the q/k/v/proj and
    /// MLP convolutions plus the two attention products
    /// heads * L * L_kv * dh each.
    pub fn macs(&self, h: usize, w: usize, sr_ratio: usize) -> u64 {
        let c = self.channels as u64;
        let l = (h * w) as u64;
        let l_kv = ((h / sr_ratio.max(1)) * (w / sr_ratio.max(1))) as u64;
        let dh = c / self.heads as u64;
        let convs = c * c * l // q
            + 2 * c * c * l_kv // k, v
            + c * c * l // proj
            + self.sr.as_ref().map_or(0, |_| c * c * (sr_ratio * sr_ratio) as u64 * l_kv)
            + (self.fc1.c_out as u64) * c * l // fc1
            + (self.fc1.c_out as u64) * 9 * l // dw
            + c * (self.fc1.c_out as u64) * l; // fc2
        let attn = 2 * self.heads as u64 * l * l_kv * dh;
        convs + attn
    }
}

#[derive(Debug, Clone)]
pub struct EncoderStage {
    pub merge: Conv2d,
    pub merge_norm: LayerNorm2d,
    pub blocks: Vec<SraBlock>,
    pub sr_ratio: usize,
}

pub struct Encoder {
    pub stem: CnnStem,
    pub stages: Vec<EncoderStage>,
}

impl Encoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cfg: &ModelConfig,
    ) -> Self {
        let stem = CnnStem::new(store, rng, &path(prefix, "stem"), cfg.in_channels, cfg.stem_channels);
        let mut stages = Vec::with_capacity(4);
        let mut c_in = cfg.in_channels;
        for s in 0..4 {
            let c_out = cfg.encoder_widths[s];
            let stride = if s == 0 { 4 } else { 2 };
            let sp = path(prefix, &format!("stage{}", s + 1));
            let merge = Conv2d::new(store, rng, &path(&sp, "merge"), c_in, c_out, 3, stride, 1);
            let merge_norm = LayerNorm2d::new(store, &path(&sp, "merge_norm"), c_out);
            let blocks = (0..cfg.encoder_blocks[s])
                .map(|bi| {
                    SraBlock::new(
                        store,
                        rng,
                        &path(&sp, &format!("block{bi}")),
                        c_out,
                        cfg.encoder_heads[s],
                        cfg.encoder_sr_ratios[s],
                        cfg.encoder_mlp_ratio,
                    )
                })
                .collect();
            stages.push(EncoderStage { merge, merge_norm, blocks, sr_ratio: cfg.encoder_sr_ratios[s] });
            c_in = c_out;
        }
        Encoder { stem, stages }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        image: Var,
        mode: Mode,
    ) -> FeaturePyramid {
        let (x1, x2) = self.stem.forward(g, store, image, mode);
        let mut outs = Vec::with_capacity(4);
        let mut cur = image;
        for stage in &self.stages {
            let merged = stage.merge.forward(g, store, cur);
            let mut t = stage.merge_norm.forward(g, store, merged);
            for block in &stage.blocks {
                t = block.forward(g, store, t);
            }
            outs.push(t);
            cur = t;
        }
        FeaturePyramid { x1, x2, x3: outs[0], x4: outs[1], x5: outs[2], x6: outs[3] }
    }

    pub fn num_params(&self) -> usize {
        self.stem.num_params()
            + self
                .stages
                .iter()
                .map(|s| {
                    s.merge.num_params()
                        + s.merge_norm.num_params()
                        + s.blocks.iter().map(|b| b.num_params()).sum::<usize>()
                })
                .sum::<usize>()
    }

    /// Multiply-accumulates of one forward pass at batch 1. Pooling and
    /// normalization contribute none by convention.
    pub fn macs(&self, cfg: &ModelConfig) -> u64 {
        let (h, w) = cfg.input_size;
        let mut total = self.stem.conv.macs(h, w);
        let mut cur = (h, w);
        for (s, stage) in self.stages.iter().enumerate() {
            let stride = if s == 0 { 4 } else { 2 };
            cur = (cur.0 / stride, cur.1 / stride);
            total += stage.merge.macs(cur.0, cur.1);
            for b in &stage.blocks {
                total += b.macs(cur.0, cur.1, stage.sr_ratio);
            }
        }
        total
    }
}

impl Conv2d {
    /// MACs at the given output size: Cout * Ho * Wo * Cin * k^2.
    pub fn macs(&self, h_out: usize, w_out: usize) -> u64 {
        (self.c_out * h_out * w_out * self.c_in * self.kernel * self.kernel) as u64
    }
}

impl crate::nn::layers::DepthwiseConv2d {
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        (self.channels * h * w * 9) as u64
    }
}

impl crate::nn::layers::Linear {
    pub fn macs(&self, rows: usize) -> u64 {
        (rows * self.c_in * self.c_out) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use rand::SeedableRng;

    #[test]
    fn pyramid_shapes_at_224() {
        let cfg = ModelConfig {
            encoder_blocks: [1, 1, 1, 1],
            ..ModelConfig::v0(9, 1)
        };
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(&mut store, &mut rng, "encoder", &cfg);
        let mut g = Graph::inference();
        let img = g.leaf(Array::zeros(&[1, 1, 224, 224]), false);
        let pyr = enc.forward(&mut g, &mut store, img, Mode::Eval);
        assert_eq!(g.shape(pyr.x1), &[1, 16, 224, 224]);
        assert_eq!(g.shape(pyr.x2), &[1, 16, 112, 112]);
        assert_eq!(g.shape(pyr.x3), &[1, 32, 56, 56]);
        assert_eq!(g.shape(pyr.x4), &[1, 64, 28, 28]);
        assert_eq!(g.shape(pyr.x5), &[1, 160, 14, 14]);
        assert_eq!(g.shape(pyr.x6), &[1, 256, 7, 7]);
    }

    #[test]
    fn pyramid_shapes_at_64() {
        let cfg = ModelConfig {
            input_size: (64, 64),
            encoder_blocks: [1, 1, 1, 1],
            encoder_sr_ratios: [2, 2, 1, 1],
            ..ModelConfig::desk(4, 1)
        };
        cfg.validate().unwrap();
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(&mut store, &mut rng, "encoder", &cfg);
        let mut g = Graph::inference();
        let img = g.leaf(Array::zeros(&[2, 1, 64, 64]), false);
        let pyr = enc.forward(&mut g, &mut store, img, Mode::Eval);
        assert_eq!(g.shape(pyr.x6), &[2, 96, 2, 2]);
    }
}
