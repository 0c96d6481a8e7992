//! Parameterized layers over the central parameter store.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use crate::param::{path, uniform_fan_in, ParamId, ParamStore};
use crate::nn::Mode;
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// 2-D convolution layer; weight [Co,Ci,k,k], bias [Co].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let w = store.add(
            path(prefix, "weight"),
            uniform_fan_in(rng, &[c_out, c_in, kernel, kernel], fan_in),
            true,
        );
        let b = store.add(path(prefix, "bias"), Array::zeros(&[c_out]), true);
        Conv2d { w, b, stride, padding, c_in, c_out, kernel }
    }

    /// Weights and biases all zero (offset/mask branches start inert).
    pub fn new_zero_init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: usize,
    ) -> Self {
        let w = store.add(
            path(prefix, "weight"),
            Array::zeros(&[c_out, c_in, kernel, kernel]),
            true,
        );
        let b = store.add(path(prefix, "bias"), Array::zeros(&[c_out]), true);
        Conv2d { w, b, stride: 1, padding, c_in, c_out, kernel }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.conv2d(x, w, b, self.stride, self.padding)
    }

    pub fn num_params(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel + self.c_out
    }
}

/// Depthwise 3x3 convolution layer; weight [C,1,3,3], bias [C].
#[derive(Debug, Clone)]
pub struct DepthwiseConv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub channels: usize,
}

impl DepthwiseConv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
    ) -> Self {
        let w = store.add(
            path(prefix, "weight"),
            uniform_fan_in(rng, &[channels, 1, 3, 3], 9),
            true,
        );
        let b = store.add(path(prefix, "bias"), Array::zeros(&[channels]), true);
        DepthwiseConv2d { w, b, channels }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.depthwise_conv2d(x, w, b)
    }

    pub fn num_params(&self) -> usize {
        self.channels * 9 + self.channels
    }
}

/// Linear layer on the last axis; weight stored [in, out] so the forward is
/// a plain row-major matmul, bias [out].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let w = store.add(path(prefix, "weight"), uniform_fan_in(rng, &[c_in, c_out], c_in), true);
        let b = store.add(path(prefix, "bias"), Array::zeros(&[c_out]), true);
        Linear { w, b, c_in, c_out }
    }

    /// x: [..., c_in] -> [..., c_out].
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let shape = g.shape(x).to_vec();
        let rank = shape.len();
        assert_eq!(shape[rank - 1], self.c_in, "linear input width mismatch");
        let rows: usize = shape[..rank - 1].iter().product();
        let x2 = g.reshape(x, &[rows, self.c_in]);
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y2 = g.matmul(x2, w);
        let yb = g.add(y2, b);
        let mut out_shape = shape;
        out_shape[rank - 1] = self.c_out;
        g.reshape(yb, &out_shape)
    }

    pub fn num_params(&self) -> usize {
        self.c_in * self.c_out + self.c_out
    }
}

/// Batch normalization over [B,C,H,W] with per-channel affine and running
/// statistics (biased variance, momentum 0.1, eps 1e-5). In train mode the
/// gradient flows through the batch statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Self {
        let gamma = store.add(path(prefix, "gamma"), Array::full(&[channels], T::one()), true);
        let beta = store.add(path(prefix, "beta"), Array::zeros(&[channels]), true);
        let running_mean =
            store.add(path(prefix, "running_mean"), Array::zeros(&[channels]), false);
        let running_var =
            store.add(path(prefix, "running_var"), Array::full(&[channels], T::one()), false);
        BatchNorm2d { gamma, beta, running_mean, running_var, channels }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Var {
        let shape = g.shape(x).to_vec();
        assert_eq!(shape.len(), 4, "batch_norm input must be [B,C,H,W]");
        assert_eq!(shape[1], self.channels, "batch_norm channel mismatch");
        let c = self.channels;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let gamma4 = g.reshape(gamma, &[1, c, 1, 1]);
        let beta4 = g.reshape(beta, &[1, c, 1, 1]);

        let xhat = match mode {
            Mode::Train => {
                let per_channel = shape[0] * shape[2] * shape[3];
                assert!(per_channel >= 2, "batch_norm train mode needs B*H*W >= 2 per channel");
                let mean = g.reduce_mean(x, &[0, 2, 3], true);
                let centered = g.sub(x, mean);
                let sq = g.mul(centered, centered);
                let var = g.reduce_mean(sq, &[0, 2, 3], true);
                // Update running stats from the batch values.
                let m = BN_MOMENTUM;
                let batch_mean = g.value(mean).reshaped(&[c]);
                let batch_var = g.value(var).reshaped(&[c]);
                let rm = store.value(self.running_mean).zip_map(&batch_mean, |r, b| {
                    r * T::from_f64(1.0 - m) + b * T::from_f64(m)
                });
                let rv = store.value(self.running_var).zip_map(&batch_var, |r, b| {
                    r * T::from_f64(1.0 - m) + b * T::from_f64(m)
                });
                store.set_value(self.running_mean, rm);
                store.set_value(self.running_var, rv);
                let var_eps = g.add_scalar(var, BN_EPS);
                let std = g.sqrt(var_eps);
                g.div(centered, std)
            }
            Mode::Eval => {
                let rm = store.value(self.running_mean).reshaped(&[1, c, 1, 1]);
                let rv = store.value(self.running_var).reshaped(&[1, c, 1, 1]);
                let inv_std = rv.map(|v| T::one() / (v + T::from_f64(BN_EPS)).sqrt());
                let rm = g.constant(rm);
                let inv = g.constant(inv_std);
                let centered = g.sub(x, rm);
                g.mul(centered, inv)
            }
        };
        let scaled = g.mul(xhat, gamma4);
        g.add(scaled, beta4)
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }
}

/// Per-position layer normalization over the channel axis of [B,C,H,W],
/// with per-channel affine. Used inside scan blocks where statistics must
/// not couple across batch or position.
#[derive(Debug, Clone)]
pub struct LayerNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

impl LayerNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Self {
        let gamma = store.add(path(prefix, "gamma"), Array::full(&[channels], T::one()), true);
        let beta = store.add(path(prefix, "beta"), Array::zeros(&[channels]), true);
        LayerNorm2d { gamma, beta, channels }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let shape = g.shape(x).to_vec();
        assert_eq!(shape.len(), 4, "layer_norm input must be [B,C,H,W]");
        assert_eq!(shape[1], self.channels, "layer_norm channel mismatch");
        let c = self.channels;
        let mean = g.reduce_mean(x, &[1], true);
        let centered = g.sub(x, mean);
        let sq = g.mul(centered, centered);
        let var = g.reduce_mean(sq, &[1], true);
        let var_eps = g.add_scalar(var, LN_EPS);
        let std = g.sqrt(var_eps);
        let xhat = g.div(centered, std);
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let gamma4 = g.reshape(gamma, &[1, c, 1, 1]);
        let beta4 = g.reshape(beta, &[1, c, 1, 1]);
        let scaled = g.mul(xhat, gamma4);
        g.add(scaled, beta4)
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bn_train_normalizes_and_shifts() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 2);
        // beta = 5
        store.set_value(bn.beta, Array::full(&[2], 5.0));
        let mut g = Graph::new();
        let data: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let x = g.leaf(Array::from_vec(&[2, 2, 2, 2], data), false);
        let y = bn.forward(&mut g, &mut store, x, Mode::Train);
        // per-channel mean of output should be beta = 5
        let m = g.reduce_mean(y, &[0, 2, 3], false);
        for &v in g.value(m).data() {
            assert!((v - 5.0).abs() < 1e-9, "mean {v}");
        }
    }

    #[test]
    fn bn_constant_input_damped_to_beta() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 1);
        let mut g = Graph::new();
        let x = g.leaf(Array::full(&[1, 1, 2, 2], 3.7), false);
        let y = bn.forward(&mut g, &mut store, x, Mode::Train);
        for &v in g.value(y).data() {
            assert!(v.abs() < 1e-9, "zero-variance output {v}");
        }
    }

    #[test]
    fn bn_eval_before_train_uses_identity_stats() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 1);
        let mut g = Graph::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 1, 2], vec![1.0, -1.0]), false);
        let y = bn.forward(&mut g, &mut store, x, Mode::Eval);
        // mean 0 var 1: y ~= x (up to eps in the denominator)
        let d = g.value(y).data();
        assert!((d[0] - 1.0).abs() < 1e-5);
        assert!((d[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn bn_running_stats_update_with_momentum() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 1);
        let mut g = Graph::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 1, 4], vec![2.0, 2.0, 6.0, 6.0]), false);
        let _ = bn.forward(&mut g, &mut store, x, Mode::Train);
        // batch mean 4, biased var 4; running = 0.9*init + 0.1*batch
        assert!((store.value(bn.running_mean).data()[0] - 0.4).abs() < 1e-12);
        assert!((store.value(bn.running_var).data()[0] - (0.9 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_is_per_position() {
        let mut store = ParamStore::<f64>::new();
        let ln = LayerNorm2d::new(&mut store, "ln", 2);
        let mut g = Graph::new();
        // two positions with different scales; each normalizes independently
        let x = g.leaf(Array::from_vec(&[1, 2, 1, 2], vec![1.0, 100.0, 3.0, 300.0]), false);
        let y = ln.forward(&mut g, &mut store, x);
        let d = g.value(y).data();
        // position 0 channels (1,3): mean 2 -> signs -,+
        assert!(d[0] < 0.0 && d[2] > 0.0);
        assert!((d[0] + d[2]).abs() < 1e-9);
        // position 1 channels (100,300): mean 200 -> same normalized values
        // (up to the eps damping, which differs with the position's variance)
        assert!((d[1] - d[0]).abs() < 1e-4);
        assert!((d[3] - d[2]).abs() < 1e-4);
    }

    #[test]
    fn linear_matches_manual_matmul() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(&mut store, &mut rng, "fc", 3, 2);
        store.set_value(lin.w, Array::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]));
        store.set_value(lin.b, Array::from_vec(&[2], vec![10.0, 20.0]));
        let mut g = Graph::new();
        let x = g.leaf(Array::from_vec(&[1, 2, 3], vec![1., 0., 0., 0., 1., 0.]), false);
        let y = lin.forward(&mut g, &store, x);
        assert_eq!(g.value(y).shape(), &[1, 2, 2]);
        assert_eq!(g.value(y).data(), &[11., 22., 13., 24.]);
    }
}
