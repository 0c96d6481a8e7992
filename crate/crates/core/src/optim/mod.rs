//! AdamW with decoupled weight decay, and a cosine schedule with warm
//! restarts (initial period T0 in epoch units, period doubling).

use crate::array::{Array, Scalar};
use crate::param::{ParamId, ParamStore};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// First/second moment state per trainable parameter, in store order.
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<Array<T>>,
    pub v: Vec<Array<T>>,
    pub params: Vec<ParamId>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(cfg: AdamWConfig, store: &ParamStore<T>) -> Self {
        assert!(cfg.lr > 0.0, "learning rate must be positive");
        let params = store.trainable_ids();
        let m = params.iter().map(|&id| Array::zeros(store.value(id).shape())).collect();
        let v = params.iter().map(|&id| Array::zeros(store.value(id).shape())).collect();
        AdamW { cfg, step: 0, m, v, params }
    }

    /// One update with the given per-step learning rate. `grads[i]` pairs
    /// with `self.params[i]`; a missing gradient skips the moment update
    /// but still applies decoupled weight decay.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Array<T>>], lr: f64) {
        assert_eq!(grads.len(), self.params.len(), "one gradient slot per parameter");
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let eps = T::from_f64(self.cfg.eps);
        let lr_t = T::from_f64(lr);
        let wd = T::from_f64(self.cfg.weight_decay);
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);
        for (i, &id) in self.params.iter().enumerate() {
            let mut value = store.value(id).clone();
            {
                let data = value.data_mut();
                // decoupled decay
                if self.cfg.weight_decay != 0.0 {
                    for p in data.iter_mut() {
                        *p = *p - lr_t * wd * *p;
                    }
                }
                if let Some(grad) = &grads[i] {
                    let md = self.m[i].data_mut();
                    let vd = self.v[i].data_mut();
                    for ((p, &g), (m, v)) in
                        data.iter_mut().zip(grad.data()).zip(md.iter_mut().zip(vd.iter_mut()))
                    {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let mhat = *m / bias1;
                        let vhat = *v / bias2;
                        *p = *p - lr_t * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            store.set_value(id, value);
        }
    }
}

/// Cosine annealing with warm restarts. The initial period is `t0` epoch
/// units and each restart doubles the period. `epoch_t` is a fractional
/// epoch position; the returned learning rate equals `peak_lr` at the start
/// of every restart and decays to `min_lr` along a half cosine.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CosineRestarts {
    pub peak_lr: f64,
    pub min_lr: f64,
    /// Initial restart period, in epochs.
    pub t0: f64,
    /// Period multiplier per restart.
    pub t_mult: f64,
}

impl CosineRestarts {
    pub fn standard(peak_lr: f64, t0: f64) -> Self {
        CosineRestarts { peak_lr, min_lr: 0.0, t0, t_mult: 2.0 }
    }

    /// (current period index, position within period in [0,1)).
    fn locate(&self, epoch_t: f64) -> (u32, f64) {
        assert!(self.t0 > 0.0 && self.t_mult >= 1.0);
        let mut start = 0.0;
        let mut period = self.t0;
        let mut idx = 0u32;
        while epoch_t >= start + period {
            start += period;
            period *= self.t_mult;
            idx += 1;
            if idx > 64 {
                break;
            }
        }
        (idx, ((epoch_t - start) / period).clamp(0.0, 1.0))
    }

    pub fn lr_at(&self, epoch_t: f64) -> f64 {
        let (_, frac) = self.locate(epoch_t.max(0.0));
        self.min_lr + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    pub fn restart_index(&self, epoch_t: f64) -> u32 {
        self.locate(epoch_t.max(0.0)).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_matches_closed_form_single_step() {
        // One parameter w=1, grad g=0.5, zero weight decay:
        // m = 0.1*g*... with bias correction the first step is
        // w' = w - lr * g / (|g| + eps) in the beta-corrected sense.
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Array::scalar(1.0), true);
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, &store);
        let g = 0.5;
        opt.step(&mut store, &[Some(Array::scalar(g))], 0.1);
        // closed form: mhat = g, vhat = g^2 -> update = lr * g/(|g|+eps) ~ lr
        let expect = 1.0 - 0.1 * g / (g + 1e-8);
        assert!((store.value(id).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn adamw_beta2_to_one_degenerates_to_sign_scaled_sgd() {
        // With beta2 -> 1, vhat stays ~ 0+, so the step direction is the
        // sign of the gradient with magnitude ~ lr * mhat / eps-limited
        // denominator; on a quadratic f(w) = w^2/2 the first step must
        // strictly decrease |w| with the sign of -grad.
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Array::scalar(2.0), true);
        let cfg = AdamWConfig {
            lr: 0.01,
            beta2: 1.0 - 1e-12,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        let g = 2.0; // grad of w^2/2 at w=2
        opt.step(&mut store, &[Some(Array::scalar(g))], 0.01);
        let w1 = store.value(id).item();
        assert!(w1 < 2.0 && w1 > 0.0, "step should move against the gradient, w1={w1}");
    }

    #[test]
    fn decoupled_weight_decay_applies_without_gradient() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Array::scalar(1.0), true);
        let cfg = AdamWConfig { lr: 0.5, weight_decay: 0.1, ..Default::default() };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[None], 0.5);
        assert!((store.value(id).item() - (1.0 - 0.5 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn cosine_restarts_peak_at_each_restart_and_doubling_periods() {
        let s = CosineRestarts::standard(1.0, 2.0);
        // restarts at epochs 0, 2, 6, 14 (periods 2, 4, 8)
        for t in [0.0, 2.0, 6.0, 14.0] {
            assert!((s.lr_at(t) - 1.0).abs() < 1e-12, "peak at restart t={t}");
        }
        assert_eq!(s.restart_index(1.9), 0);
        assert_eq!(s.restart_index(2.0), 1);
        assert_eq!(s.restart_index(5.9), 1);
        assert_eq!(s.restart_index(6.0), 2);
        // non-negative and continuous within a period
        let mut prev = s.lr_at(2.0);
        for i in 1..=40 {
            let t = 2.0 + 4.0 * i as f64 / 41.0; // stay inside period 2
            let lr = s.lr_at(t);
            assert!(lr >= 0.0 && lr <= prev + 1e-9, "monotone decay within a period");
            prev = lr;
        }
        // near the end of a period lr approaches min_lr
        assert!(s.lr_at(5.999) < 0.01);
    }
}
