//! Visual state-space block: local convolutional enrichment followed by the
//! four-direction selective scan, gated and projected back, with a residual
//! connection.
//!
//! Layout: LayerNorm -> linear expand (x2) -> depthwise 3x3 -> SiLU -> ss2d
//! -> LayerNorm -> (x) SiLU(parallel linear path) -> linear back to C -> +x.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::nn::layers::{Conv2d, DepthwiseConv2d, LayerNorm2d};
use crate::param::{path, ParamStore};
use crate::ssm::params::SsmParams;
use crate::ssm::ss2d::{ss2d, MergeMode};
use rand_chacha::ChaCha8Rng;

pub const EXPAND: usize = 2;

#[derive(Debug, Clone)]
pub struct Vssmb {
    pub norm_in: LayerNorm2d,
    pub expand_proj: Conv2d,
    pub gate_proj: Conv2d,
    pub dw: DepthwiseConv2d,
    pub ssm: SsmParams,
    pub norm_scan: LayerNorm2d,
    pub out_proj: Conv2d,
    pub merge: MergeMode,
    pub channels: usize,
}

impl Vssmb {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
        state: usize,
        merge: MergeMode,
    ) -> Self {
        let e = channels * EXPAND;
        let norm_in = LayerNorm2d::new(store, &path(prefix, "norm_in"), channels);
        let expand_proj = Conv2d::new(store, rng, &path(prefix, "expand"), channels, e, 1, 1, 0);
        let gate_proj = Conv2d::new(store, rng, &path(prefix, "gate"), channels, e, 1, 1, 0);
        let dw = DepthwiseConv2d::new(store, rng, &path(prefix, "dw"), e);
        let ssm = SsmParams::new(store, rng, &path(prefix, "ssm"), e, state, 4);
        let norm_scan = LayerNorm2d::new(store, &path(prefix, "norm_scan"), e);
        let out_proj = Conv2d::new(store, rng, &path(prefix, "out"), e, channels, 1, 1, 0);
        Vssmb { norm_in, expand_proj, gate_proj, dw, ssm, norm_scan, out_proj, merge, channels }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        assert_eq!(g.shape(x)[1], self.channels, "vssmb channel mismatch");
        let n = self.norm_in.forward(g, store, x);
        let a = self.expand_proj.forward(g, store, n);
        let a = self.dw.forward(g, store, a);
        let a = g.silu(a);
        let a = ss2d(g, store, &self.ssm, a, self.merge);
        let a = self.norm_scan.forward(g, store, a);
        let z = self.gate_proj.forward(g, store, n);
        let z = g.silu(z);
        let gated = g.mul(a, z);
        let y = self.out_proj.forward(g, store, gated);
        g.add(y, x)
    }

    pub fn num_params(&self) -> usize {
        self.norm_in.num_params()
            + self.expand_proj.num_params()
            + self.gate_proj.num_params()
            + self.dw.num_params()
            + self.ssm.num_params()
            + self.norm_scan.num_params()
            + self.out_proj.num_params()
    }
}
