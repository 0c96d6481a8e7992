//! Training objectives: joint Dice loss on the final prediction and the
//! windowed-distribution supervision applied to the intermediate decoder
//! scales (class-frequency targets, KL divergence, boundary weighting,
//! scale aggregation), plus a plain resized cross-entropy variant as the
//! conventional deep-supervision baseline.

use crate::array::{sc, Array, Scalar};
use crate::graph::{Graph, Var};

pub const DICE_EPS: f64 = 1e-6;
/// Floor applied to log Q, keeping the KL finite when a head assigns
/// vanishing probability to a present class.
pub const KL_Q_FLOOR: f64 = 1e-12;

/// What the total loss includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    Dice,
    DiceDeepSup,
    #[default]
    DiceMsda,
}

/// lambda_s = s / sum(1..=s_max): strictly increasing, fine scales weighted
/// highest.
pub fn default_lambdas(scales: usize) -> Vec<f64> {
    let total: usize = (1..=scales).sum();
    (1..=scales).map(|s| s as f64 / total as f64).collect()
}

/// One-hot encoding of an integer mask batch, as a plain array.
pub fn one_hot<T: Scalar>(mask: &[u8], batch: usize, h: usize, w: usize, n: usize) -> Array<T> {
    assert_eq!(mask.len(), batch * h * w, "one_hot mask length");
    let mut data = vec![T::zero(); batch * n * h * w];
    for b in 0..batch {
        for p in 0..h * w {
            let c = mask[b * h * w + p] as usize;
            assert!(c < n, "mask value {c} out of range for {n} classes");
            data[(b * n + c) * h * w + p] = T::one();
        }
    }
    Array::from_vec(&[batch, n, h, w], data)
}

/// Joint Dice loss over batch, positions and classes:
/// 1 - 2*sum(p*y) / (sum(p^2) + sum(y^2) + eps).
pub fn dice_loss<T: Scalar>(g: &mut Graph<T>, pred_probs: Var, gt_onehot: Var, eps: f64) -> Var {
    assert_eq!(
        g.shape(pred_probs),
        g.shape(gt_onehot),
        "dice_loss shapes must match"
    );
    let inter = g.mul(pred_probs, gt_onehot);
    let num = g.sum_all(inter);
    let num2 = g.scale(num, 2.0);
    let p2 = g.mul(pred_probs, pred_probs);
    let y2 = g.mul(gt_onehot, gt_onehot);
    let sp = g.sum_all(p2);
    let sy = g.sum_all(y2);
    let den = g.add(sp, sy);
    let den = g.add_scalar(den, eps);
    let ratio = g.div(num2, den);
    let neg = g.neg(ratio);
    g.add_scalar(neg, 1.0)
}

/// Per-tile class frequencies of the ground truth at a coarser grid:
/// non-overlapping K x K windows (stride = size), K = H/Hs exactly.
pub fn windowed_gt_distribution<T: Scalar>(
    mask: &[u8],
    batch: usize,
    h: usize,
    w: usize,
    n: usize,
    hs: usize,
    ws: usize,
) -> Array<T> {
    assert!(hs >= 1 && ws >= 1);
    assert_eq!(h % hs, 0, "window tiling: {h} not divisible by {hs}");
    assert_eq!(w % ws, 0, "window tiling: {w} not divisible by {ws}");
    let kh = h / hs;
    let kw = w / ws;
    let inv = T::one() / T::from_f64((kh * kw) as f64);
    let mut out = vec![T::zero(); batch * n * hs * ws];
    for b in 0..batch {
        for ty in 0..hs {
            for tx in 0..ws {
                for iy in 0..kh {
                    for ix in 0..kw {
                        let c = mask[(b * h + ty * kh + iy) * w + tx * kw + ix] as usize;
                        assert!(c < n, "mask value {c} out of range for {n} classes");
                        out[((b * n + c) * hs + ty) * ws + tx] += inv;
                    }
                }
            }
        }
    }
    Array::from_vec(&[batch, n, hs, ws], out)
}

/// Boundary weighting map (1 - max_c P)^alpha, [B,Hs,Ws]. Zero on pure
/// tiles, positive wherever a tile mixes classes.
pub fn boundary_weight<T: Scalar>(p: &Array<T>, alpha: f64) -> Array<T> {
    assert!(alpha > 0.0, "boundary weight exponent must be positive");
    let s = p.shape();
    assert_eq!(s.len(), 4, "boundary_weight expects [B,N,Hs,Ws]");
    let (b, n, hs, ws) = (s[0], s[1], s[2], s[3]);
    let pd = p.data();
    let mut out = vec![T::zero(); b * hs * ws];
    for bi in 0..b {
        for pos in 0..hs * ws {
            let mut mx = T::zero();
            for c in 0..n {
                let v = pd[(bi * n + c) * hs * ws + pos];
                if v > mx {
                    mx = v;
                }
            }
            out[bi * hs * ws + pos] = (T::one() - mx).powf(sc::<T>(alpha));
        }
    }
    Array::from_vec(&[b, hs, ws], out)
}

/// Per-position KL(P || Q) from the constant target distribution and the
/// head's log-probabilities: sum_c P (log P - log Q), with 0*log 0 = 0 and
/// log Q floored at log(1e-12). Returns [B,Hs,Ws].
pub fn kl_divergence_map<T: Scalar>(g: &mut Graph<T>, p: &Array<T>, log_q: Var) -> Var {
    let s = p.shape().to_vec();
    assert_eq!(g.shape(log_q), &s[..], "kl map: P and logQ shapes must match");
    let (b, n, hs, ws) = (s[0], s[1], s[2], s[3]);
    // constant entropy term sum_c P log P (0 log 0 := 0)
    let mut ent = vec![T::zero(); b * hs * ws];
    for bi in 0..b {
        for c in 0..n {
            for pos in 0..hs * ws {
                let pv = p.data()[(bi * n + c) * hs * ws + pos];
                if pv > T::zero() {
                    ent[bi * hs * ws + pos] += pv * pv.ln();
                }
            }
        }
    }
    let ent = g.constant(Array::from_vec(&[b, hs, ws], ent));
    let pc = g.constant(p.clone());
    let floored = g.clamp_min(log_q, KL_Q_FLOOR.ln());
    let cross = g.mul(pc, floored);
    let cross_sum = g.reduce_sum(cross, &[1], false); // [B,Hs,Ws]
    g.sub(ent, cross_sum)
}

/// Boundary-weighted distributional loss at one scale:
/// mean over batch of (1/(Hs*Ws)) sum_hw (1 + W) * KL. Also returns
/// (min, max, mean) of the weight map for reporting.
pub fn dist_loss_scale<T: Scalar>(
    g: &mut Graph<T>,
    p: &Array<T>,
    head_logits: Var,
    alpha: f64,
) -> (Var, (f64, f64, f64)) {
    let log_q = g.log_softmax(head_logits, 1);
    let kl = kl_divergence_map(g, p, log_q);
    let wmap = boundary_weight(p, alpha);
    let stats = {
        let d = wmap.data();
        let mn = d.iter().fold(f64::INFINITY, |m, v| m.min(v.to_f64_()));
        let mx = d.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_()));
        let mean = d.iter().map(|v| v.to_f64_()).sum::<f64>() / d.len() as f64;
        (mn, mx, mean)
    };
    let factor = g.constant(wmap.map(|v| v + T::one()));
    let weighted = g.mul(factor, kl);
    let loss = g.mean_all(weighted); // sum / (B*Hs*Ws)
    (loss, stats)
}

/// Full per-term breakdown of one loss evaluation. `total` always equals
/// dice + sum(lambda_s * per_scale_dist[s]) over the active scales.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub dice: f64,
    pub per_scale_dist: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub boundary_stats: Vec<(f64, f64, f64)>,
    pub total: f64,
}

impl LossReport {
    pub fn consistent(&self, tol: f64) -> bool {
        let recomputed: f64 = self.dice
            + self
                .lambdas
                .iter()
                .zip(self.per_scale_dist.iter())
                .map(|(l, d)| l * d)
                .sum::<f64>();
        (recomputed - self.total).abs() <= tol
    }

    pub fn log_line(&self) -> String {
        let mut s = format!("dice={:.6}", self.dice);
        for (i, (l, d)) in self.lambdas.iter().zip(self.per_scale_dist.iter()).enumerate() {
            s.push_str(&format!(" dist{}={:.6} lambda{}={:.6}", i + 1, d, i + 1, l));
        }
        s.push_str(&format!(" total={:.6}", self.total));
        s
    }
}

pub struct LossOutput {
    pub total: Var,
    pub report: LossReport,
}

/// Aggregated multi-scale distributional loss: sum_s lambda_s * dist_s.
/// `aux_logits` are ordered coarsest to finest; `reverse_weights` pairs the
/// largest lambda with the coarsest scale instead of the finest.
#[allow(clippy::too_many_arguments)]
pub fn msda_loss<T: Scalar>(
    g: &mut Graph<T>,
    aux_logits: &[Var],
    mask: &[u8],
    batch: usize,
    h: usize,
    w: usize,
    n: usize,
    lambdas: &[f64],
    alpha: f64,
    reverse_weights: bool,
) -> (Var, Vec<f64>, Vec<(f64, f64, f64)>) {
    assert_eq!(
        aux_logits.len(),
        lambdas.len(),
        "msda: {} aux scales vs {} lambdas",
        aux_logits.len(),
        lambdas.len()
    );
    assert!(
        lambdas.windows(2).all(|p| p[0] < p[1]),
        "msda: lambdas must be strictly increasing, got {lambdas:?}"
    );
    let mut per_scale = Vec::with_capacity(aux_logits.len());
    let mut stats = Vec::with_capacity(aux_logits.len());
    let mut total: Option<Var> = None;
    for (i, &logits) in aux_logits.iter().enumerate() {
        let shape = g.shape(logits).to_vec();
        assert_eq!(shape[0], batch, "msda aux batch mismatch");
        assert_eq!(shape[1], n, "msda aux class-count mismatch");
        let (hs, ws) = (shape[2], shape[3]);
        let p = windowed_gt_distribution::<T>(mask, batch, h, w, n, hs, ws);
        let (loss_s, st) = dist_loss_scale(g, &p, logits, alpha);
        per_scale.push(g.value(loss_s).item().to_f64_());
        stats.push(st);
        let lam = if reverse_weights { lambdas[lambdas.len() - 1 - i] } else { lambdas[i] };
        let term = g.scale(loss_s, lam);
        total = Some(match total {
            Some(t) => g.add(t, term),
            None => term,
        });
    }
    let total = total.expect("msda needs at least one scale");
    (total, per_scale, stats)
}

/// Resized cross-entropy deep supervision (the conventional baseline):
/// each aux map is bilinearly upsampled to full resolution and scored with
/// pixel cross-entropy against the one-hot ground truth.
fn deepsup_ce_scale<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    gt_onehot: &Array<T>,
    h: usize,
    w: usize,
) -> Var {
    let up = g.bilinear_resize(logits, h, w);
    let lsm = g.log_softmax(up, 1);
    let oh = g.constant(gt_onehot.clone());
    let picked = g.mul(oh, lsm);
    let per_pixel = g.reduce_sum(picked, &[1], false); // [B,H,W]
    let mean = g.mean_all(per_pixel);
    g.neg(mean)
}

/// Settings consumed by `total_loss`.
#[derive(Debug, Clone)]
pub struct LossConfig {
    pub supervision: Supervision,
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub reverse_scale_weights: bool,
}

impl LossConfig {
    pub fn new(supervision: Supervision, scales: usize) -> Self {
        LossConfig {
            supervision,
            lambdas: default_lambdas(scales),
            alpha: 1.0,
            reverse_scale_weights: false,
        }
    }
}

/// Complete objective: Dice on softmax(logits) plus the configured deep
/// supervision over the aux scales.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    aux_logits: &[Var],
    mask: &[u8],
    batch: usize,
    h: usize,
    w: usize,
    n: usize,
    cfg: &LossConfig,
) -> LossOutput {
    assert_eq!(g.shape(logits), &[batch, n, h, w], "total_loss logits shape");
    let gt = one_hot::<T>(mask, batch, h, w, n);
    let probs = g.softmax(logits, 1);
    let gt_var = g.constant(gt.clone());
    let dice = dice_loss(g, probs, gt_var, DICE_EPS);
    let dice_val = g.value(dice).item().to_f64_();

    let scales = aux_logits.len();
    match cfg.supervision {
        Supervision::Dice => LossOutput {
            total: dice,
            report: LossReport {
                dice: dice_val,
                per_scale_dist: vec![0.0; scales],
                lambdas: vec![0.0; scales],
                boundary_stats: vec![(0.0, 0.0, 0.0); scales],
                total: dice_val,
            },
        },
        Supervision::DiceMsda => {
            let (multi, per_scale, stats) = msda_loss(
                g,
                aux_logits,
                mask,
                batch,
                h,
                w,
                n,
                &cfg.lambdas,
                cfg.alpha,
                cfg.reverse_scale_weights,
            );
            let total = g.add(dice, multi);
            let lambdas_used: Vec<f64> = if cfg.reverse_scale_weights {
                cfg.lambdas.iter().rev().copied().collect()
            } else {
                cfg.lambdas.clone()
            };
            let total_val = g.value(total).item().to_f64_();
            LossOutput {
                total,
                report: LossReport {
                    dice: dice_val,
                    per_scale_dist: per_scale,
                    lambdas: lambdas_used,
                    boundary_stats: stats,
                    total: total_val,
                },
            }
        }
        Supervision::DiceDeepSup => {
            let mut per_scale = Vec::with_capacity(scales);
            let mut total = dice;
            let lambdas_used: Vec<f64> = if cfg.reverse_scale_weights {
                cfg.lambdas.iter().rev().copied().collect()
            } else {
                cfg.lambdas.clone()
            };
            for (i, &aux) in aux_logits.iter().enumerate() {
                let ce = deepsup_ce_scale(g, aux, &gt, h, w);
                per_scale.push(g.value(ce).item().to_f64_());
                let term = g.scale(ce, lambdas_used[i]);
                total = g.add(total, term);
            }
            let total_val = g.value(total).item().to_f64_();
            LossOutput {
                total,
                report: LossReport {
                    dice: dice_val,
                    per_scale_dist: per_scale,
                    lambdas: lambdas_used,
                    boundary_stats: vec![(0.0, 0.0, 0.0); scales],
                    total: total_val,
                },
            }
        }
    }
}

#[cfg(test)]
mod tests;
