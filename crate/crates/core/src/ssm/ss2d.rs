//! Four-direction 2-D selective scan: flatten the feature map along rows
//! and columns in both orders, scan each sequence with its own projection
//! parameters, and merge the un-flattened results.

use crate::array::Scalar;
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::ssm::params::SsmParams;

/// The four scan orders: "horizontal, vertical, and their inverses".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    RowForward,
    RowBackward,
    ColForward,
    ColBackward,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::RowForward,
        ScanDirection::RowBackward,
        ScanDirection::ColForward,
        ScanDirection::ColBackward,
    ];

    pub fn index(self) -> usize {
        match self {
            ScanDirection::RowForward => 0,
            ScanDirection::RowBackward => 1,
            ScanDirection::ColForward => 2,
            ScanDirection::ColBackward => 3,
        }
    }
}

/// How the four directional outputs combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    #[default]
    Sum,
    Mean,
}

/// [B,C,H,W] -> [B,L,C] in the direction's scan order.
fn flatten<T: Scalar>(g: &mut Graph<T>, x: Var, dir: ScanDirection) -> Var {
    let s = g.shape(x).to_vec();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    match dir {
        ScanDirection::RowForward | ScanDirection::RowBackward => {
            let t = g.permute(x, &[0, 2, 3, 1]); // [B,H,W,C]
            let seq = g.reshape(t, &[b, h * w, c]);
            if dir == ScanDirection::RowBackward {
                g.flip(seq, 1)
            } else {
                seq
            }
        }
        ScanDirection::ColForward | ScanDirection::ColBackward => {
            let t = g.permute(x, &[0, 3, 2, 1]); // [B,W,H,C]
            let seq = g.reshape(t, &[b, w * h, c]);
            if dir == ScanDirection::ColBackward {
                g.flip(seq, 1)
            } else {
                seq
            }
        }
    }
}

/// Inverse of `flatten`.
fn unflatten<T: Scalar>(
    g: &mut Graph<T>,
    seq: Var,
    dir: ScanDirection,
    b: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Var {
    match dir {
        ScanDirection::RowForward | ScanDirection::RowBackward => {
            let seq = if dir == ScanDirection::RowBackward { g.flip(seq, 1) } else { seq };
            let t = g.reshape(seq, &[b, h, w, c]);
            g.permute(t, &[0, 3, 1, 2])
        }
        ScanDirection::ColForward | ScanDirection::ColBackward => {
            let seq = if dir == ScanDirection::ColBackward { g.flip(seq, 1) } else { seq };
            let t = g.reshape(seq, &[b, w, h, c]);
            g.permute(t, &[0, 3, 2, 1])
        }
    }
}

/// Four-direction scan with the given merge. Directions run and merge in
/// the fixed `ScanDirection::ALL` order.
pub fn ss2d<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &SsmParams,
    x: Var,
    merge: MergeMode,
) -> Var {
    let s = g.shape(x).to_vec();
    assert_eq!(s.len(), 4, "ss2d expects [B,C,H,W]");
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert_eq!(params.dirs.len(), 4, "ss2d needs parameters for all four directions");
    let mut acc: Option<Var> = None;
    for dir in ScanDirection::ALL {
        let seq = flatten(g, x, dir);
        let y_seq = params.scan_sequence(g, store, dir.index(), seq);
        let y = unflatten(g, y_seq, dir, b, c, h, w);
        acc = Some(match acc {
            Some(a) => g.add(a, y),
            None => y,
        });
    }
    let merged = acc.expect("four directions");
    match merge {
        MergeMode::Sum => merged,
        MergeMode::Mean => g.scale(merged, 0.25),
    }
}

/// Single-direction scan over a feature map (test and analysis hook).
pub fn ss2d_single<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &SsmParams,
    x: Var,
    dir: ScanDirection,
) -> Var {
    let s = g.shape(x).to_vec();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let seq = flatten(g, x, dir);
    let y_seq = params.scan_sequence(g, store, dir.index(), seq);
    unflatten(g, y_seq, dir, b, c, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(c: usize) -> (ParamStore<f64>, SsmParams) {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = SsmParams::new(&mut store, &mut rng, "ssm", c, 4, 4);
        // randomize projections a little
        for id in store.trainable_ids() {
            let e = store.entry(id);
            if e.path.contains("x_proj.weight") {
                let shape = e.value.shape().to_vec();
                let n: usize = shape.iter().product();
                let mut r2 = ChaCha8Rng::seed_from_u64(id.index() as u64);
                store.set_value(
                    id,
                    Array::from_vec(&shape, (0..n).map(|_| r2.gen_range(-0.5..0.5)).collect()),
                );
            }
        }
        (store, p)
    }

    #[test]
    fn single_pixel_causal_support_row_forward() {
        let (store, p) = setup(2);
        let (h, w) = (3usize, 5usize);
        let mut g = Graph::<f64>::new();
        let mut x = Array::<f64>::zeros(&[1, 2, h, w]);
        // nonzero pixel at (1, 2)
        x.data_mut()[1 * w + 2] = 1.0;
        x.data_mut()[h * w + 1 * w + 2] = -0.5;
        let xv = g.leaf(x, false);
        let y = ss2d_single(&mut g, &store, &p, xv, ScanDirection::RowForward);
        let yd = g.value(y).clone();
        // positions strictly before (row-major) the pixel must be zero
        let pix = 1 * w + 2;
        for c in 0..2 {
            for pos in 0..h * w {
                let v = yd.data()[c * h * w + pos];
                if pos < pix {
                    assert!(v.abs() < 1e-14, "non-causal output at pos {pos}: {v}");
                }
            }
            // the pixel itself must respond (D-skip at minimum)
            assert!(yd.data()[c * h * w + pix].abs() > 0.0);
        }
    }

    #[test]
    fn rotation_symmetry_with_swapped_parameter_sets() {
        // Scanning a 180deg-rotated image with forward/backward parameter
        // sets swapped must give the 180deg-rotated output.
        let (store, p) = setup(2);
        let (h, w) = (4usize, 3usize);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n: usize = 2 * h * w;
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 2, h, w], data), false);
        // rot180 = flip H then flip W
        let xh = g.flip(x, 2);
        let x_rot = g.flip(xh, 3);

        let y_fwd = ss2d_single(&mut g, &store, &p, x, ScanDirection::RowForward);
        let y_rot_bwd = ss2d_single(&mut g, &store, &p, x_rot, ScanDirection::RowForward);
        // rotate the direct output and scan the rotated image with the
        // *backward* direction set made equivalent: row-backward over the
        // original equals row-forward over the rotated image, parameterized
        // identically. Here both scans use direction-0 parameters, so:
        let yh = g.flip(y_fwd, 2);
        let y_fwd_rot = g.flip(yh, 3);
        // row-forward(rot(x)) visits pixels in exactly reversed order, which
        // is row-backward(x); with the same parameter set those coincide:
        let y_bwd = {
            let seq = {
                let t = g.permute(x, &[0, 2, 3, 1]);
                let seq = g.reshape(t, &[1, h * w, 2]);
                g.flip(seq, 1)
            };
            let ys = p.scan_sequence(&mut g, &store, 0, seq);
            let ys = g.flip(ys, 1);
            let t = g.reshape(ys, &[1, h, w, 2]);
            g.permute(t, &[0, 3, 1, 2])
        };
        let lhs = g.value(y_rot_bwd).clone();
        let rhs = {
            let yb_h = g.flip(y_bwd, 2);
            let yb_rot = g.flip(yb_h, 3);
            g.value(yb_rot).clone()
        };
        assert!(lhs.max_abs_diff(&rhs) < 1e-12, "rotation symmetry violated");
        // and the plain rotated-forward output differs from rotating the
        // forward output (sanity: the check above is not vacuous)
        assert!(g.value(y_rot_bwd).max_abs_diff(&g.value(y_fwd_rot).clone()) > 1e-9);
    }

    #[test]
    fn transpose_consistency_with_swapped_row_col_sets() {
        // ss2d on the transposed map, with row/col parameter sets swapped,
        // equals the transpose of ss2d on the original.
        let (mut store, mut p) = setup(2);
        let (h, w) = (3usize, 4usize);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 2, h, w], data), false);
        let y = ss2d(&mut g, &store, &p, x, MergeMode::Sum);
        let xt = g.permute(x, &[0, 1, 3, 2]);
        // swap row<->col parameter sets
        p.dirs.swap(0, 2);
        p.dirs.swap(1, 3);
        let yt = ss2d(&mut g, &mut store, &p, xt, MergeMode::Sum);
        let y_t = g.permute(y, &[0, 1, 3, 2]);
        let diff = g.value(yt).max_abs_diff(g.value(y_t));
        assert!(diff < 1e-12, "transpose consistency violated: {diff}");
    }

    #[test]
    fn merge_mean_is_quarter_of_sum() {
        let (store, p) = setup(2);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::full(&[1, 2, 2, 2], 0.7), false);
        let ysum = ss2d(&mut g, &store, &p, x, MergeMode::Sum);
        let ymean = ss2d(&mut g, &store, &p, x, MergeMode::Mean);
        let scaled = g.scale(ysum, 0.25);
        assert!(g.value(ymean).max_abs_diff(g.value(scaled)) < 1e-15);
    }
}
