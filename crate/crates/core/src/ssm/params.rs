//! Selective-scan parameters: shared state matrix (as A_log, so A = -exp(A_log)
//! stays strictly negative) and skip vector, plus per-direction input
//! projections producing delta (via softplus), B and C at every position.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use crate::nn::layers::Linear;
use crate::param::{path, ParamId, ParamStore};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_STATE_SIZE: usize = 16;
pub const DT_MIN: f64 = 1e-3;
pub const DT_MAX: f64 = 1e-1;

/// delta-projection rank: channels/16, floored at 1.
pub fn dt_rank_for(channels: usize) -> usize {
    (channels / 16).max(1)
}

#[derive(Debug, Clone)]
pub struct DirectionParams {
    /// channels -> rank + 2*state: (delta_low_rank | B | C) per position.
    pub x_proj: Linear,
    /// rank -> channels, bias initialized so softplus lands in [DT_MIN, DT_MAX].
    pub dt_proj: Linear,
}

#[derive(Debug, Clone)]
pub struct SsmParams {
    /// [C, N]; A = -exp(a_log).
    pub a_log: ParamId,
    /// [C] skip connection.
    pub d_skip: ParamId,
    pub dirs: Vec<DirectionParams>,
    pub channels: usize,
    pub state: usize,
    pub rank: usize,
}

impl SsmParams {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
        state: usize,
        n_directions: usize,
    ) -> Self {
        let rank = dt_rank_for(channels);
        // S4D-real initialization: A_row = -(1..=N), shared across directions.
        let a_log: Vec<T> = (0..channels)
            .flat_map(|_| (1..=state).map(|n| T::from_f64((n as f64).ln())))
            .collect();
        let a_log = store.add(
            path(prefix, "a_log"),
            Array::from_vec(&[channels, state], a_log),
            true,
        );
        let d_skip =
            store.add(path(prefix, "d_skip"), Array::full(&[channels], T::one()), true);
        let dirs = (0..n_directions)
            .map(|i| {
                let dp = path(prefix, &format!("dir{i}"));
                let x_proj = Linear::new(store, rng, &path(&dp, "x_proj"), channels, rank + 2 * state);
                let dt_proj = Linear::new(store, rng, &path(&dp, "dt_proj"), rank, channels);
                // bias = softplus^-1(dt), dt log-uniform in [DT_MIN, DT_MAX]
                let bias: Vec<T> = (0..channels)
                    .map(|_| {
                        let dt = (rng.gen_range(DT_MIN.ln()..DT_MAX.ln())).exp();
                        T::from_f64((dt.exp() - 1.0).ln())
                    })
                    .collect();
                store.set_value(dt_proj.b, Array::from_vec(&[channels], bias));
                DirectionParams { x_proj, dt_proj }
            })
            .collect();
        SsmParams { a_log, d_skip, dirs, channels, state, rank }
    }

    /// Run one direction's projections and the scan over x_seq [B,L,C].
    pub fn scan_sequence<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        dir: usize,
        x_seq: Var,
    ) -> Var {
        let shape = g.shape(x_seq).to_vec();
        assert_eq!(shape.len(), 3, "scan_sequence expects [B,L,C]");
        let (b_sz, l, c) = (shape[0], shape[1], shape[2]);
        assert_eq!(c, self.channels, "scan_sequence channel mismatch");
        let dp = &self.dirs[dir];
        let n = self.state;
        let r = self.rank;
        let proj = dp.x_proj.forward(g, store, x_seq); // [B,L,R+2N]
        let dtr = g.narrow(proj, 2, 0, r);
        let bmat = g.narrow(proj, 2, r, n);
        let cmat = g.narrow(proj, 2, r + n, n);
        let dt_lin = dp.dt_proj.forward(g, store, dtr); // [B,L,C]
        let delta = g.softplus(dt_lin);
        let a_log = g.param(store, self.a_log);
        let a_exp = g.exp(a_log);
        let a = g.neg(a_exp);
        let d = g.param(store, self.d_skip);
        let _ = (b_sz, l);
        g.selective_scan(x_seq, delta, a, bmat, cmat, d)
    }

    pub fn num_params(&self) -> usize {
        self.channels * self.state
            + self.channels
            + self
                .dirs
                .iter()
                .map(|d| d.x_proj.num_params() + d.dt_proj.num_params())
                .sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn a_is_strictly_negative_and_delta_positive() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SsmParams::new(&mut store, &mut rng, "ssm", 8, 4, 4);
        let a_log = store.value(p.a_log);
        assert!(a_log.data().iter().all(|v| v.is_finite()));
        // A = -exp(a_log) < 0 for any finite a_log
        assert!(a_log.data().iter().all(|&v| -v.exp() < 0.0));

        let mut g = Graph::new();
        let x = g.leaf(Array::zeros(&[1, 5, 8]), false);
        let y = p.scan_sequence(&mut g, &store, 0, x);
        assert_eq!(g.shape(y), &[1, 5, 8]);
        // zero input -> zero output (B-path input is zero, D*x is zero)
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dt_bias_lands_in_configured_interval() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SsmParams::new(&mut store, &mut rng, "ssm", 16, 4, 1);
        let bias = store.value(p.dirs[0].dt_proj.b);
        for &b in bias.data() {
            let dt = (1.0 + b.exp()).ln(); // softplus
            assert!(
                (DT_MIN * 0.99..=DT_MAX * 1.01).contains(&dt),
                "softplus(bias) = {dt} outside [{DT_MIN}, {DT_MAX}]"
            );
        }
    }

    #[test]
    fn rank_rule() {
        assert_eq!(dt_rank_for(8), 1);
        assert_eq!(dt_rank_for(16), 1);
        assert_eq!(dt_rank_for(64), 4);
        assert_eq!(dt_rank_for(1), 1);
    }
}
