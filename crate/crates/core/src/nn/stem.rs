//! Full-resolution CNN stem: 7x7 conv (stride 1, padding 3) + BN + ReLU,
//! plus a 2x2 max-pooled copy. The two outputs feed the last two decoder
//! stages directly.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::nn::layers::{BatchNorm2d, Conv2d};
use crate::nn::Mode;
use crate::ops::pool::PoolMode;
use crate::param::{path, ParamStore};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CnnStem {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl CnnStem {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        c_img: usize,
        c1: usize,
    ) -> Self {
        let conv = Conv2d::new(store, rng, &path(prefix, "conv"), c_img, c1, 7, 1, 3);
        let bn = BatchNorm2d::new(store, &path(prefix, "bn"), c1);
        CnnStem { conv, bn }
    }

    /// Returns (x1 at full resolution, x2 at half resolution).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        image: Var,
        mode: Mode,
    ) -> (Var, Var) {
        let c = self.conv.forward(g, store, image);
        let n = self.bn.forward(g, store, c, mode);
        let x1 = g.relu(n);
        let x2 = g.pool2d(x1, PoolMode::Max, 2, 2);
        (x1, x2)
    }

    pub fn num_params(&self) -> usize {
        self.conv.num_params() + self.bn.num_params()
    }
}
