//! Evaluation metrics on hard label masks: per-class Dice and IoU, and the
//! 95th-percentile symmetric boundary Hausdorff distance (HD95).
//!
//! HD95 conventions, applied identically in the fast path and the
//! brute-force oracle:
//! - boundary = foreground pixels with at least one background 4-neighbor,
//!   where out-of-image counts as background;
//! - directed distances: each boundary pixel of one mask to the nearest
//!   boundary pixel of the other, Euclidean between pixel centers;
//! - percentile = nearest-rank (ceil(0.95 n), 1-indexed), no interpolation;
//! - symmetric value = max of the two directed 95th percentiles;
//! - both masks empty -> 0; exactly one empty -> the image diagonal
//!   hypot(H, W) as a finite sentinel.

use crate::data::Dataset;

/// Dice coefficient for one class between two hard masks; both empty -> 1.
pub fn dice_score(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    assert_eq!(pred.len(), gt.len(), "dice_score mask sizes differ");
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut g = 0usize;
    for (&a, &b) in pred.iter().zip(gt.iter()) {
        let pa = a == class;
        let gb = b == class;
        inter += (pa && gb) as usize;
        p += pa as usize;
        g += gb as usize;
    }
    if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    }
}

/// Intersection-over-union for one class; both empty -> 1.
pub fn iou_score(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    assert_eq!(pred.len(), gt.len(), "iou_score mask sizes differ");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.iter().zip(gt.iter()) {
        let pa = a == class;
        let gb = b == class;
        inter += (pa && gb) as usize;
        union += (pa || gb) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Foreground pixels with a background 4-neighbor (image border counts as
/// background).
pub fn boundary_pixels(mask: &[bool], h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            let edge = y == 0
                || x == 0
                || y == h - 1
                || x == w - 1
                || !mask[(y - 1) * w + x]
                || !mask[(y + 1) * w + x]
                || !mask[y * w + x - 1]
                || !mask[y * w + x + 1];
            if edge {
                out.push((y, x));
            }
        }
    }
    out
}

/// Nearest-rank percentile of unsorted distances (p in (0,1]).
fn nearest_rank(mut values: Vec<f64>, p: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let rank = (p * values.len() as f64).ceil() as usize;
    values[rank.max(1) - 1]
}

/// Exact squared Euclidean distance transform (two-pass 1-D lower
/// envelopes) to the set of `true` pixels. Infinite where the set is empty.
fn squared_edt(points: &[bool], h: usize, w: usize) -> Vec<f64> {
    const INF: f64 = 1e18;
    let mut dist = vec![INF; h * w];
    for (d, &p) in dist.iter_mut().zip(points.iter()) {
        if p {
            *d = 0.0;
        }
    }
    // columns then rows
    let mut buf = vec![0.0f64; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            buf[y] = dist[y * w + x];
        }
        let env = envelope_1d(&buf[..h]);
        for y in 0..h {
            dist[y * w + x] = env[y];
        }
    }
    for y in 0..h {
        buf[..w].copy_from_slice(&dist[y * w..(y + 1) * w]);
        let env = envelope_1d(&buf[..w]);
        dist[y * w..(y + 1) * w].copy_from_slice(&env);
    }
    dist
}

/// 1-D squared-distance lower envelope (Felzenszwalb-Huttenlocher).
fn envelope_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    let mut out = vec![0.0f64; n];
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
    out
}

fn diagonal(h: usize, w: usize) -> f64 {
    ((h * h + w * w) as f64).sqrt()
}

/// HD95 via exact distance transforms.
pub fn hd95(pred: &[bool], gt: &[bool], h: usize, w: usize) -> f64 {
    assert_eq!(pred.len(), h * w);
    assert_eq!(gt.len(), h * w);
    let pb = boundary_pixels(pred, h, w);
    let gb = boundary_pixels(gt, h, w);
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return diagonal(h, w),
        _ => {}
    }
    let mut gset = vec![false; h * w];
    for &(y, x) in &gb {
        gset[y * w + x] = true;
    }
    let mut pset = vec![false; h * w];
    for &(y, x) in &pb {
        pset[y * w + x] = true;
    }
    let edt_g = squared_edt(&gset, h, w);
    let edt_p = squared_edt(&pset, h, w);
    let d_pg: Vec<f64> = pb.iter().map(|&(y, x)| edt_g[y * w + x].sqrt()).collect();
    let d_gp: Vec<f64> = gb.iter().map(|&(y, x)| edt_p[y * w + x].sqrt()).collect();
    nearest_rank(d_pg, 0.95).max(nearest_rank(d_gp, 0.95))
}

/// All-pairs brute-force HD95, used only to verify `hd95`. Shares the
/// boundary and percentile conventions but computes every pairwise
/// distance directly.
pub fn hd95_bruteforce(pred: &[bool], gt: &[bool], h: usize, w: usize) -> f64 {
    let pb = boundary_pixels(pred, h, w);
    let gb = boundary_pixels(gt, h, w);
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return diagonal(h, w),
        _ => {}
    }
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| -> Vec<f64> {
        from.iter()
            .map(|&(y, x)| {
                to.iter()
                    .map(|&(gy, gx)| {
                        let dy = y as f64 - gy as f64;
                        let dx = x as f64 - gx as f64;
                        dy * dy + dx * dx
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    };
    nearest_rank(directed(&pb, &gb), 0.95).max(nearest_rank(directed(&gb, &pb), 0.95))
}

/// Aggregated evaluation over a dataset given per-sample predicted masks.
/// Per-class metrics average over samples; the reported means average over
/// foreground classes only (background excluded).
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_class_dice: Vec<f64>,
    pub per_class_iou: Vec<f64>,
    pub per_class_hd95: Vec<f64>,
    pub mean_dice: f64,
    pub mean_iou: f64,
    pub mean_hd95: f64,
    pub sample_count: usize,
}

impl EvalReport {
    pub fn log_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("samples={}", self.sample_count),
            format!("mean_dice={:.6}", self.mean_dice),
            format!("mean_iou={:.6}", self.mean_iou),
            format!("mean_hd95={:.6}", self.mean_hd95),
        ];
        for (c, ((d, i), h)) in self
            .per_class_dice
            .iter()
            .zip(self.per_class_iou.iter())
            .zip(self.per_class_hd95.iter())
            .enumerate()
        {
            lines.push(format!("class{c}_dice={d:.6} class{c}_iou={i:.6} class{c}_hd95={h:.6}"));
        }
        lines
    }
}

pub fn evaluate_masks(preds: &[Vec<u8>], dataset: &Dataset) -> EvalReport {
    assert!(!dataset.is_empty(), "evaluate on empty dataset");
    assert_eq!(preds.len(), dataset.len(), "one prediction per sample");
    let n = dataset.num_classes;
    let mut dice = vec![0.0; n];
    let mut iou = vec![0.0; n];
    let mut hd = vec![0.0; n];
    for (pred, sample) in preds.iter().zip(dataset.samples.iter()) {
        let (h, w) = (sample.h, sample.w);
        for c in 0..n {
            dice[c] += dice_score(pred, &sample.mask, c as u8);
            iou[c] += iou_score(pred, &sample.mask, c as u8);
            let pm: Vec<bool> = pred.iter().map(|&m| m == c as u8).collect();
            let gm: Vec<bool> = sample.mask.iter().map(|&m| m == c as u8).collect();
            hd[c] += hd95(&pm, &gm, h, w);
        }
    }
    let count = preds.len() as f64;
    for c in 0..n {
        dice[c] /= count;
        iou[c] /= count;
        hd[c] /= count;
    }
    let fg = (1..n).collect::<Vec<_>>();
    let mean = |v: &[f64]| fg.iter().map(|&c| v[c]).sum::<f64>() / fg.len().max(1) as f64;
    EvalReport {
        mean_dice: mean(&dice),
        mean_iou: mean(&iou),
        mean_hd95: mean(&hd),
        per_class_dice: dice,
        per_class_iou: iou,
        per_class_hd95: hd,
        sample_count: preds.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dice_and_iou_basics() {
        let a = vec![1u8, 1, 0, 0];
        let b = vec![1u8, 0, 1, 0];
        assert_eq!(dice_score(&a, &a, 1), 1.0);
        assert_eq!(dice_score(&a, &b, 1), 0.5); // |inter|=1, |P|+|G|=4
        assert_eq!(dice_score(&a, &b, 7), 1.0); // class absent in both
        assert!((iou_score(&a, &b, 1) - 1.0 / 3.0).abs() < 1e-12);
        // disjoint nonempty
        let c = vec![0u8, 0, 1, 1];
        assert_eq!(dice_score(&a, &c, 1), 0.0);
    }

    #[test]
    fn dice_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a: Vec<u8> = (0..64).map(|_| rng.gen_range(0..3u8)).collect();
            let b: Vec<u8> = (0..64).map(|_| rng.gen_range(0..3u8)).collect();
            for c in 0..3 {
                assert_eq!(dice_score(&a, &b, c), dice_score(&b, &a, c));
            }
        }
    }

    #[test]
    fn overlap_half_case() {
        // |P| = |G| = 100, overlap 50 -> dice 0.5
        let mut p = vec![0u8; 400];
        let mut g = vec![0u8; 400];
        for i in 0..100 {
            p[i] = 1;
            g[i + 50] = 1;
        }
        assert_eq!(dice_score(&p, &g, 1), 0.5);
    }

    #[test]
    fn hd95_identical_masks_zero() {
        let m: Vec<bool> = (0..64).map(|i| (8..24).contains(&i)).collect();
        assert_eq!(hd95(&m, &m, 8, 8), 0.0);
    }

    #[test]
    fn hd95_two_single_pixels() {
        let mut a = vec![false; 100];
        let mut b = vec![false; 100];
        a[2 * 10 + 3] = true;
        b[2 * 10 + 8] = true; // 5 pixels apart on a row
        assert_eq!(hd95(&a, &b, 10, 10), 5.0);
        assert_eq!(hd95_bruteforce(&a, &b, 10, 10), 5.0);
    }

    #[test]
    fn hd95_empty_mask_conventions() {
        let empty = vec![false; 64];
        let full: Vec<bool> = (0..64).map(|i| i == 10).collect();
        assert_eq!(hd95(&empty, &empty, 8, 8), 0.0);
        let sentinel = (128.0f64).sqrt();
        assert!((hd95(&empty, &full, 8, 8) - sentinel).abs() < 1e-12);
        assert!((hd95(&full, &empty, 8, 8) - sentinel).abs() < 1e-12);
        assert_eq!(hd95_bruteforce(&empty, &full, 8, 8), hd95(&empty, &full, 8, 8));
    }

    #[test]
    fn hd95_matches_bruteforce_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..25 {
            let (h, w) = (32usize, 32usize);
            let a: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.2)).collect();
            let b: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.2)).collect();
            let fast = hd95(&a, &b, h, w);
            let slow = hd95_bruteforce(&a, &b, h, w);
            assert_eq!(fast.to_bits(), slow.to_bits(), "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn boundary_uses_four_neighbors_and_image_border() {
        // full image foreground: boundary is the border ring
        let m = vec![true; 16];
        let b = boundary_pixels(&m, 4, 4);
        assert_eq!(b.len(), 12);
        // interior 2x2 block: all 4 pixels are boundary
        let mut m2 = vec![false; 16];
        for y in 1..3 {
            for x in 1..3 {
                m2[y * 4 + x] = true;
            }
        }
        assert_eq!(boundary_pixels(&m2, 4, 4).len(), 4);
    }

    #[test]
    fn nearest_rank_is_exact() {
        let vals = vec![5.0, 1.0, 3.0, 2.0, 4.0];
        // p95 of 5 values: rank ceil(4.75) = 5 -> max
        assert_eq!(nearest_rank(vals.clone(), 0.95), 5.0);
        assert_eq!(nearest_rank(vals.clone(), 0.5), 3.0); // rank ceil(2.5)=3
        assert_eq!(nearest_rank(vec![7.0], 0.95), 7.0);
    }

    #[test]
    fn evaluate_gt_as_prediction_is_perfect() {
        let spec = crate::data::synth::SynthSpec {
            count: 3,
            h: 32,
            w: 32,
            num_classes: 3,
            ..Default::default()
        };
        let ds = crate::data::synth::synth_generate(&spec, 5);
        let preds: Vec<Vec<u8>> = ds.samples.iter().map(|s| s.mask.clone()).collect();
        let report = evaluate_masks(&preds, &ds);
        assert_eq!(report.mean_dice, 1.0);
        assert_eq!(report.mean_hd95, 0.0);
        assert_eq!(report.sample_count, 3);
    }

    #[test]
    fn evaluate_all_background_prediction_zero_dice() {
        let spec = crate::data::synth::SynthSpec {
            count: 2,
            h: 32,
            w: 32,
            num_classes: 3,
            ..Default::default()
        };
        let ds = crate::data::synth::synth_generate(&spec, 6);
        let preds: Vec<Vec<u8>> = ds.samples.iter().map(|s| vec![0u8; s.mask.len()]).collect();
        let report = evaluate_masks(&preds, &ds);
        assert_eq!(report.mean_dice, 0.0);
        assert!(report.mean_hd95 > 0.0);
    }

    #[test]
    fn evaluate_means_equal_hand_average() {
        let spec = crate::data::synth::SynthSpec {
            count: 4,
            h: 32,
            w: 32,
            num_classes: 3,
            ..Default::default()
        };
        let ds = crate::data::synth::synth_generate(&spec, 9);
        // predictions: gt for half, background for half
        let preds: Vec<Vec<u8>> = ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| if i % 2 == 0 { s.mask.clone() } else { vec![0u8; s.mask.len()] })
            .collect();
        let report = evaluate_masks(&preds, &ds);
        // hand-average per class over samples
        for c in 1..3u8 {
            let mut acc = 0.0;
            for (p, s) in preds.iter().zip(ds.samples.iter()) {
                acc += dice_score(p, &s.mask, c);
            }
            acc /= preds.len() as f64;
            assert!((report.per_class_dice[c as usize] - acc).abs() < 1e-12);
        }
    }
}
