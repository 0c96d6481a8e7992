//! Geometric augmentation: independent horizontal/vertical flips and
//! quarter-turn rotations, applied identically to image and mask so labels
//! transport exactly. Free-angle rotation (nearest-neighbor) is a separate
//! opt-in call.

use crate::data::SegSample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub hflip: bool,
    pub vflip: bool,
    /// Number of 90-degree counterclockwise quarter turns (0..=3).
    pub rot90: u8,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation { hflip: false, vflip: false, rot90: 0 };

    /// 50% flips, uniform quarter turn.
    pub fn sample(rng: &mut ChaCha8Rng) -> Augmentation {
        Augmentation {
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
            rot90: rng.gen_range(0..4u8),
        }
    }
}

fn flip_h<P: Copy>(data: &[P], h: usize, w: usize) -> Vec<P> {
    let mut out = Vec::with_capacity(data.len());
    for y in 0..h {
        for x in 0..w {
            out.push(data[y * w + (w - 1 - x)]);
        }
    }
    out
}

fn flip_v<P: Copy>(data: &[P], h: usize, w: usize) -> Vec<P> {
    let mut out = Vec::with_capacity(data.len());
    for y in 0..h {
        out.extend_from_slice(&data[(h - 1 - y) * w..(h - y) * w]);
    }
    out
}

/// One counterclockwise quarter turn; output is w x h.
fn rot90_ccw<P: Copy>(data: &[P], h: usize, w: usize) -> Vec<P> {
    let mut out = Vec::with_capacity(data.len());
    for y2 in 0..w {
        for x2 in 0..h {
            // out(y2, x2) = in(x2, w-1-y2)
            out.push(data[x2 * w + (w - 1 - y2)]);
        }
    }
    out
}

fn apply_plane<P: Copy>(aug: Augmentation, data: &[P], h: usize, w: usize) -> (Vec<P>, usize, usize) {
    let mut cur = data.to_vec();
    let (mut ch, mut cw) = (h, w);
    if aug.hflip {
        cur = flip_h(&cur, ch, cw);
    }
    if aug.vflip {
        cur = flip_v(&cur, ch, cw);
    }
    for _ in 0..aug.rot90 % 4 {
        cur = rot90_ccw(&cur, ch, cw);
        std::mem::swap(&mut ch, &mut cw);
    }
    (cur, ch, cw)
}

fn invert_plane<P: Copy>(aug: Augmentation, data: &[P], h: usize, w: usize) -> (Vec<P>, usize, usize) {
    let mut cur = data.to_vec();
    let (mut ch, mut cw) = (h, w);
    // undo rotation first (3 more quarter turns per applied turn), then flips
    for _ in 0..(4 - aug.rot90 % 4) % 4 {
        cur = rot90_ccw(&cur, ch, cw);
        std::mem::swap(&mut ch, &mut cw);
    }
    if aug.vflip {
        cur = flip_v(&cur, ch, cw);
    }
    if aug.hflip {
        cur = flip_h(&cur, ch, cw);
    }
    (cur, ch, cw)
}

/// Apply the augmentation to image and mask jointly.
pub fn apply(sample: &SegSample, aug: Augmentation) -> SegSample {
    let (h, w) = (sample.h, sample.w);
    let mut image = Vec::with_capacity(sample.image.len());
    let (mut oh, mut ow) = (h, w);
    for c in 0..sample.channels {
        let plane = &sample.image[c * h * w..(c + 1) * h * w];
        let (p, ph, pw) = apply_plane(aug, plane, h, w);
        image.extend(p);
        oh = ph;
        ow = pw;
    }
    let (mask, _, _) = apply_plane(aug, &sample.mask, h, w);
    SegSample { id: sample.id.clone(), channels: sample.channels, h: oh, w: ow, image, mask }
}

/// Undo `apply` exactly.
pub fn invert(sample: &SegSample, aug: Augmentation) -> SegSample {
    let (h, w) = (sample.h, sample.w);
    let mut image = Vec::with_capacity(sample.image.len());
    let (mut oh, mut ow) = (h, w);
    for c in 0..sample.channels {
        let plane = &sample.image[c * h * w..(c + 1) * h * w];
        let (p, ph, pw) = invert_plane(aug, plane, h, w);
        image.extend(p);
        oh = ph;
        ow = pw;
    }
    let (mask, _, _) = invert_plane(aug, &sample.mask, h, w);
    SegSample { id: sample.id.clone(), channels: sample.channels, h: oh, w: ow, image, mask }
}

/// Sample and apply an augmentation in one step (training path).
pub fn augment(sample: &SegSample, rng: &mut ChaCha8Rng) -> SegSample {
    apply(sample, Augmentation::sample(rng))
}

/// Opt-in free-angle rotation with nearest-neighbor resampling for both
/// image and mask; out-of-frame pixels read background (class 0, image 0).
pub fn rotate_free(sample: &SegSample, angle_rad: f64) -> SegSample {
    let (h, w) = (sample.h, sample.w);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = angle_rad.sin_cos();
    let src_of = |y: usize, x: usize| -> Option<usize> {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        // inverse rotation
        let sy = cy + dy * cos + dx * sin;
        let sx = cx - dy * sin + dx * cos;
        let iy = sy.round();
        let ix = sx.round();
        if iy < 0.0 || ix < 0.0 || iy >= h as f64 || ix >= w as f64 {
            None
        } else {
            Some(iy as usize * w + ix as usize)
        }
    };
    let mut image = vec![0.0f32; sample.image.len()];
    let mut mask = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            if let Some(src) = src_of(y, x) {
                for c in 0..sample.channels {
                    image[c * h * w + y * w + x] = sample.image[c * h * w + src];
                }
                mask[y * w + x] = sample.mask[src];
            }
        }
    }
    SegSample { id: sample.id.clone(), channels: sample.channels, h, w, image, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy() -> SegSample {
        SegSample {
            id: "t".into(),
            channels: 1,
            h: 2,
            w: 3,
            image: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            mask: vec![0, 1, 2, 3, 4, 5],
        }
    }

    #[test]
    fn double_hflip_is_identity() {
        let s = toy();
        let aug = Augmentation { hflip: true, vflip: false, rot90: 0 };
        let once = apply(&s, aug);
        let twice = apply(&once, aug);
        assert_eq!(twice.mask, s.mask);
        assert_eq!(twice.image, s.image);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let s = toy();
        let aug = Augmentation { hflip: false, vflip: false, rot90: 1 };
        let mut cur = s.clone();
        for _ in 0..4 {
            cur = apply(&cur, aug);
        }
        assert_eq!(cur.mask, s.mask);
        assert_eq!(cur.image, s.image);
    }

    #[test]
    fn apply_then_invert_is_identity_for_all_augmentations() {
        let s = toy();
        for hflip in [false, true] {
            for vflip in [false, true] {
                for rot90 in 0..4u8 {
                    let aug = Augmentation { hflip, vflip, rot90 };
                    let round = invert(&apply(&s, aug), aug);
                    assert_eq!(round.mask, s.mask, "{aug:?}");
                    assert_eq!(round.image, s.image, "{aug:?}");
                    assert_eq!(round.h, s.h);
                    assert_eq!(round.w, s.w);
                }
            }
        }
    }

    #[test]
    fn mask_value_set_preserved() {
        let s = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let out = augment(&s, &mut rng);
            let mut a = out.mask.clone();
            let mut b = s.mask.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rot90_rotates_counterclockwise() {
        // [[0,1,2],[3,4,5]] rotated CCW -> [[2,5],[1,4],[0,3]]
        let s = toy();
        let out = apply(&s, Augmentation { hflip: false, vflip: false, rot90: 1 });
        assert_eq!(out.h, 3);
        assert_eq!(out.w, 2);
        assert_eq!(out.mask, vec![2, 5, 1, 4, 0, 3]);
    }

    #[test]
    fn free_rotation_keeps_labels_integer_and_in_range() {
        let spec = crate::data::synth::SynthSpec {
            count: 1,
            h: 32,
            w: 32,
            num_classes: 3,
            ..Default::default()
        };
        let ds = crate::data::synth::synth_generate(&spec, 3);
        let rotated = rotate_free(&ds.samples[0], 0.35);
        assert!(rotated.mask.iter().all(|&m| m < 3));
        assert_eq!(rotated.h, 32);
        // zero-angle rotation is the identity
        let same = rotate_free(&ds.samples[0], 0.0);
        assert_eq!(same.mask, ds.samples[0].mask);
    }
}
