//! Modulated deformable 3x3 convolution and the deformable residual block.
//!
//! The deformable convolution samples each kernel tap at a continuously
//! offset location (bilinear, zero outside the image) and weights it by a
//! modulation factor 2*sigmoid(mask_logit) in (0,2), shared across input
//! channels. With zero offsets and zero mask logits it reduces exactly to
//! the standard convolution with the same weights.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use crate::nn::layers::{BatchNorm2d, Conv2d};
use crate::nn::Mode;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

pub const KERNEL: usize = 3;
pub const TAPS: usize = KERNEL * KERNEL; // 9
pub const OFFSET_CHANNELS: usize = 2 * TAPS; // 18

/// Constant sampling lattice [1, 9, H, W, 2]: tap j at output (y,x) reads
/// input (y + ky - 1, x + kx - 1) before offsets.
fn base_lattice<T: Scalar>(h: usize, w: usize) -> Array<T> {
    let mut data = Vec::with_capacity(TAPS * h * w * 2);
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let dy = ky as f64 - 1.0;
            let dx = kx as f64 - 1.0;
            for y in 0..h {
                for x in 0..w {
                    data.push(T::from_f64(y as f64 + dy));
                    data.push(T::from_f64(x as f64 + dx));
                }
            }
        }
    }
    Array::from_vec(&[1, TAPS, h, w, 2], data)
}

impl<T: Scalar> Graph<T> {
    /// x [B,C,H,W] * w [Co,C,3,3] + b [Co], offsets [B,18,H,W] in pixels
    /// (channel 2j = dy of tap j, 2j+1 = dx), mask_logits [B,9,H,W].
    pub fn deformable_conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        offsets: Var,
        mask_logits: Var,
    ) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "deformable_conv2d input must be [B,C,H,W]");
        let (batch, c, h, wdt) = (xs[0], xs[1], xs[2], xs[3]);
        assert_eq!(ws[1], c, "deformable_conv2d weight channel mismatch");
        assert_eq!(&ws[2..], &[KERNEL, KERNEL], "deformable_conv2d supports 3x3 kernels");
        assert_eq!(
            self.shape(offsets),
            &[batch, OFFSET_CHANNELS, h, wdt],
            "offsets must be [B,18,H,W]"
        );
        assert_eq!(
            self.shape(mask_logits),
            &[batch, TAPS, h, wdt],
            "mask logits must be [B,9,H,W]"
        );
        let c_out = ws[0];

        // coords = lattice + offsets, as [B,9,H,W,2]
        let off5 = self.reshape(offsets, &[batch, TAPS, 2, h, wdt]);
        let off5 = self.permute(off5, &[0, 1, 3, 4, 2]);
        let lattice = self.constant(base_lattice::<T>(h, wdt));
        let coords = self.add(off5, lattice);

        // modulation in (0,2), broadcast over input channels
        let sig = self.sigmoid(mask_logits);
        let m = self.scale(sig, 2.0);
        let m5 = self.reshape(m, &[batch, 1, TAPS, h, wdt]);

        let samples = self.grid_sample_bilinear(x, coords); // [B,C,9,H,W]
        let modulated = self.mul(samples, m5);
        let flat = self.reshape(modulated, &[batch, c * TAPS, h, wdt]);
        // tap contraction as a 1x1 convolution with the reshaped kernel
        let w_flat = self.reshape(w, &[c_out, c * TAPS, 1, 1]);
        self.conv2d(flat, w_flat, b, 1, 0)
    }
}

/// Which second convolution the residual block uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    #[default]
    Deformable,
    Standard,
}

/// Residual block: 3x3 conv + BN + ReLU, then a (deformable or standard)
/// 3x3 conv + BN + ReLU, plus a skip (1x1-projected when widths differ).
/// Offset and mask branches are zero-initialized 3x3 convs over the first
/// stage's output, so at initialization the deformable path equals its
/// standard twin.
#[derive(Debug, Clone)]
pub struct DeformableResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub offset_conv: Option<Conv2d>,
    pub mask_conv: Option<Conv2d>,
    pub skip_proj: Option<Conv2d>,
    pub kind: ConvKind,
}

impl DeformableResidualBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kind: ConvKind,
    ) -> Self {
        let conv1 = Conv2d::new(store, rng, &path(prefix, "conv1"), c_in, c_out, 3, 1, 1);
        let bn1 = BatchNorm2d::new(store, &path(prefix, "bn1"), c_out);
        let conv2 = Conv2d::new(store, rng, &path(prefix, "conv2"), c_out, c_out, 3, 1, 1);
        let bn2 = BatchNorm2d::new(store, &path(prefix, "bn2"), c_out);
        let (offset_conv, mask_conv) = match kind {
            ConvKind::Deformable => (
                Some(Conv2d::new_zero_init(
                    store,
                    &path(prefix, "offset"),
                    c_out,
                    OFFSET_CHANNELS,
                    3,
                    1,
                )),
                Some(Conv2d::new_zero_init(store, &path(prefix, "mask"), c_out, TAPS, 3, 1)),
            ),
            ConvKind::Standard => (None, None),
        };
        let skip_proj = (c_in != c_out)
            .then(|| Conv2d::new(store, rng, &path(prefix, "skip"), c_in, c_out, 1, 1, 0));
        DeformableResidualBlock { conv1, bn1, conv2, bn2, offset_conv, mask_conv, skip_proj, kind }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Var {
        let t = self.conv1.forward(g, store, x);
        let t = self.bn1.forward(g, store, t, mode);
        let t = g.relu(t);
        let d = match self.kind {
            ConvKind::Deformable => {
                let offsets = self
                    .offset_conv
                    .as_ref()
                    .expect("deformable block has offset branch")
                    .forward(g, store, t);
                let mask = self
                    .mask_conv
                    .as_ref()
                    .expect("deformable block has mask branch")
                    .forward(g, store, t);
                let w = g.param(store, self.conv2.w);
                let b = g.param(store, self.conv2.b);
                g.deformable_conv2d(t, w, b, offsets, mask)
            }
            ConvKind::Standard => self.conv2.forward(g, store, t),
        };
        let d = self.bn2.forward(g, store, d, mode);
        let d = g.relu(d);
        let skip = match &self.skip_proj {
            Some(p) => p.forward(g, store, x),
            None => x,
        };
        g.add(d, skip)
    }

    pub fn num_params(&self) -> usize {
        self.conv1.num_params()
            + self.bn1.num_params()
            + self.conv2.num_params()
            + self.bn2.num_params()
            + self.offset_conv.as_ref().map_or(0, |c| c.num_params())
            + self.mask_conv.as_ref().map_or(0, |c| c.num_params())
            + self.skip_proj.as_ref().map_or(0, |c| c.num_params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rand_array(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array<f64> {
        let n: usize = shape.iter().product();
        Array::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_offsets_and_masks_reduce_to_standard_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(rand_array(&mut rng, &[2, 3, 6, 6]), false);
        let w = g.leaf(rand_array(&mut rng, &[4, 3, 3, 3]), false);
        let b = g.leaf(rand_array(&mut rng, &[4]), false);
        let offsets = g.leaf(Array::zeros(&[2, 18, 6, 6]), false);
        let masks = g.leaf(Array::zeros(&[2, 9, 6, 6]), false);
        let deformed = g.deformable_conv2d(x, w, b, offsets, masks);
        let standard = g.conv2d(x, w, b, 1, 1);
        let diff = g.value(deformed).max_abs_diff(g.value(standard));
        assert!(diff < 1e-10, "deformable at rest vs standard: {diff}");
    }

    #[test]
    fn integer_shift_equals_conv_of_shifted_input_interior() {
        // Shift every tap by (1, 0): output(p) == standard conv at p+(1,0)
        // wherever the window stays in bounds.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut g = Graph::<f64>::new();
        let h = 7;
        let xv = rand_array(&mut rng, &[1, 2, h, h]);
        let x = g.leaf(xv, false);
        let w = g.leaf(rand_array(&mut rng, &[2, 2, 3, 3]), false);
        let b = g.leaf(Array::zeros(&[2]), false);
        let mut off = Array::<f64>::zeros(&[1, 18, h, h]);
        {
            let d = off.data_mut();
            // dy channels are even tap channels
            for j in 0..9 {
                for p in 0..h * h {
                    d[(2 * j) * h * h + p] = 1.0;
                }
            }
        }
        let offsets = g.leaf(off, false);
        let masks = g.leaf(Array::zeros(&[1, 9, h, h]), false);
        let shifted = g.deformable_conv2d(x, w, b, offsets, masks);
        let standard = g.conv2d(x, w, b, 1, 1);
        let sv = g.value(shifted).clone();
        let cv = g.value(standard).clone();
        for co in 0..2 {
            for y in 1..h - 2 {
                for xx in 1..h - 1 {
                    let a = sv.data()[(co * h + y) * h + xx];
                    let e = cv.data()[(co * h + y + 1) * h + xx];
                    assert!((a - e).abs() < 1e-10, "mismatch at co={co} y={y} x={xx}");
                }
            }
        }
    }

    #[test]
    fn modulation_scales_taps() {
        // mask logits -> +inf gives modulation 2: doubles the conv output
        // (bias excluded).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(rand_array(&mut rng, &[1, 2, 5, 5]), false);
        let w = g.leaf(rand_array(&mut rng, &[2, 2, 3, 3]), false);
        let b = g.leaf(Array::zeros(&[2]), false);
        let offsets = g.leaf(Array::zeros(&[1, 18, 5, 5]), false);
        let big = g.leaf(Array::full(&[1, 9, 5, 5], 60.0), false);
        let deformed = g.deformable_conv2d(x, w, b, offsets, big);
        let standard = g.conv2d(x, w, b, 1, 1);
        let doubled = g.scale(standard, 2.0);
        assert!(g.value(deformed).max_abs_diff(g.value(doubled)) < 1e-9);
    }

    #[test]
    fn drb_zero_init_matches_standard_twin() {
        let mut store_d = ParamStore::<f64>::new();
        let mut store_s = ParamStore::<f64>::new();
        let mut rng_d = ChaCha8Rng::seed_from_u64(100);
        let mut rng_s = ChaCha8Rng::seed_from_u64(100);
        let drb = DeformableResidualBlock::new(&mut store_d, &mut rng_d, "drb", 3, 5, ConvKind::Deformable);
        let std_block =
            DeformableResidualBlock::new(&mut store_s, &mut rng_s, "drb", 3, 5, ConvKind::Standard);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = rand_array(&mut rng, &[2, 3, 6, 6]);
        let mut g = Graph::new();
        let x = g.leaf(input, false);
        let yd = drb.forward(&mut g, &mut store_d, x, Mode::Eval);
        let ys = std_block.forward(&mut g, &mut store_s, x, Mode::Eval);
        let diff = g.value(yd).max_abs_diff(g.value(ys));
        assert!(diff < 1e-5, "zero-init deformable vs standard twin: {diff}");
    }

    #[test]
    fn drb_same_width_has_no_skip_projection() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let drb =
            DeformableResidualBlock::new(&mut store, &mut rng, "drb", 4, 4, ConvKind::Deformable);
        assert!(drb.skip_proj.is_none());
        assert!(store.find("drb.skip.weight").is_none());
        let drb2 =
            DeformableResidualBlock::new(&mut store, &mut rng, "drb2", 4, 6, ConvKind::Deformable);
        assert!(drb2.skip_proj.is_some());
    }
}
