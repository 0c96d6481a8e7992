//! Distribution head: projects a decoder feature map to per-class logits at
//! its native scale via DWConv3x3 -> BN -> ReLU -> Conv1x1.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::nn::layers::{BatchNorm2d, Conv2d, DepthwiseConv2d};
use crate::nn::Mode;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct DistributionHead {
    pub dw: DepthwiseConv2d,
    pub bn: BatchNorm2d,
    pub proj: Conv2d,
}

impl DistributionHead {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
        num_classes: usize,
    ) -> Self {
        let dw = DepthwiseConv2d::new(store, rng, &path(prefix, "dw"), channels);
        let bn = BatchNorm2d::new(store, &path(prefix, "bn"), channels);
        let proj = Conv2d::new(store, rng, &path(prefix, "proj"), channels, num_classes, 1, 1, 0);
        DistributionHead { dw, bn, proj }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        feat: Var,
        mode: Mode,
    ) -> Var {
        let t = self.dw.forward(g, store, feat);
        let t = self.bn.forward(g, store, t, mode);
        let t = g.relu(t);
        self.proj.forward(g, store, t)
    }

    pub fn num_params(&self) -> usize {
        self.dw.num_params() + self.bn.num_params() + self.proj.num_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn shape_contract() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = DistributionHead::new(&mut store, &mut rng, "head", 32, 4);
        let mut g = Graph::new();
        let x = g.leaf(Array::zeros(&[2, 32, 14, 14]), false);
        let y = head.forward(&mut g, &mut store, x, Mode::Eval);
        assert_eq!(g.shape(y), &[2, 4, 14, 14]);
    }

    #[test]
    fn zero_parameters_give_uniform_log_softmax() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = DistributionHead::new(&mut store, &mut rng, "head", 8, 3);
        for id in store.ids() {
            if store.entry(id).trainable {
                let shape = store.value(id).shape().to_vec();
                store.set_value(id, Array::zeros(&shape));
            }
        }
        let mut g = Graph::new();
        let x = g.leaf(Array::full(&[1, 8, 4, 4], 1.25), false);
        let y = head.forward(&mut g, &mut store, x, Mode::Eval);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        let lsm = g.log_softmax(y, 1);
        let expect = (1.0f64 / 3.0).ln();
        assert!(g.value(lsm).data().iter().all(|&v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn receptive_field_is_three_by_three() {
        // Perturbing a pixel outside the 3x3 neighborhood of a position must
        // not change its logit (eval mode, fixed running stats).
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let head = DistributionHead::new(&mut store, &mut rng, "head", 4, 2);
        let base: Vec<f64> = (0..4 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probe = |data: Vec<f64>| -> Vec<f64> {
            let mut g = Graph::<f64>::inference();
            let mut store = store.clone();
            let x = g.leaf(Array::from_vec(&[1, 4, 8, 8], data), false);
            let y = head.forward(&mut g, &mut store, x, Mode::Eval);
            g.value(y).data().to_vec()
        };
        let y0 = probe(base.clone());
        // perturb pixel (7,7) in channel 0; logits at (2,2) must not move
        let mut perturbed = base.clone();
        perturbed[7 * 8 + 7] += 3.0;
        let y1 = probe(perturbed);
        for cls in 0..2 {
            let idx = (cls * 8 + 2) * 8 + 2;
            assert_eq!(y0[idx], y1[idx], "logit moved outside receptive field");
        }
        // sanity: a neighbor pixel does change it
        let mut near = base.clone();
        near[2 * 8 + 3] += 3.0;
        let y2 = probe(near);
        let idx00 = 2 * 8 + 2; // class 0, position (2,2)
        assert_ne!(y0[idx00].to_bits(), y2[idx00].to_bits());
    }
}
