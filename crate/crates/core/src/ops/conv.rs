//! 2-D convolution (cross-correlation) via im2col + GEMM, and a direct
//! depthwise 3x3 kernel. Zero padding, NCHW layout.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use crate::ops::matmul::gemm;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub fn conv_spec(
    x_shape: &[usize],
    w_shape: &[usize],
    stride: usize,
    padding: usize,
) -> ConvSpec {
    assert_eq!(x_shape.len(), 4, "conv2d input must be [B,C,H,W], got {x_shape:?}");
    assert_eq!(w_shape.len(), 4, "conv2d weight must be [Co,Ci,kh,kw], got {w_shape:?}");
    let (batch, c_in, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (c_out, ci_w, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
    assert_eq!(c_in, ci_w, "conv2d: input has {c_in} channels but weight expects {ci_w}");
    assert!(stride >= 1, "conv2d stride must be >= 1");
    assert!(h + 2 * padding >= kh && w + 2 * padding >= kw, "conv2d kernel larger than padded input");
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;
    ConvSpec { batch, c_in, h, w, c_out, kh, kw, stride, padding, h_out, w_out }
}

/// Gather one image into column layout [Ci*kh*kw, Ho*Wo].
fn im2col<T: Scalar>(x: &[T], s: &ConvSpec, cols: &mut [T]) {
    let (h, w, kh, kw) = (s.h, s.w, s.kh, s.kw);
    let (ho, wo, st, p) = (s.h_out, s.w_out, s.stride, s.padding);
    debug_assert_eq!(cols.len(), s.c_in * kh * kw * ho * wo);
    let mut row = 0usize;
    for ci in 0..s.c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * st + ky) as isize - p as isize;
                    let dst_row = &mut cols[dst_base + oy * wo..dst_base + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * st + kx) as isize - p as isize;
                        *d = if ix >= 0 && ix < w as isize {
                            src_row[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add a column-layout gradient back into one image.
fn col2im<T: Scalar>(cols: &[T], s: &ConvSpec, dx: &mut [T]) {
    let (h, w, kh, kw) = (s.h, s.w, s.kh, s.kw);
    let (ho, wo, st, p) = (s.h_out, s.w_out, s.stride, s.padding);
    let mut row = 0usize;
    for ci in 0..s.c_in {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let src_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * st + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &cols[src_base + oy * wo..src_base + (oy + 1) * wo];
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in src_row.iter().enumerate() {
                        let ix = (ox * st + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += g;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward kernel on plain arrays (shared by graph op and shape walkers).
pub fn conv2d_forward<T: Scalar>(
    x: &Array<T>,
    wgt: &Array<T>,
    bias: &Array<T>,
    stride: usize,
    padding: usize,
) -> Array<T> {
    let s = conv_spec(x.shape(), wgt.shape(), stride, padding);
    assert_eq!(bias.shape(), &[s.c_out], "conv2d bias must be [Co]");
    let ck = s.c_in * s.kh * s.kw;
    let locs = s.h_out * s.w_out;
    let mut out = vec![T::zero(); s.batch * s.c_out * locs];
    let xd = x.data();
    let wd = wgt.data();
    let bd = bias.data();
    out.par_chunks_mut(s.c_out * locs).enumerate().for_each(|(b, ob)| {
        let mut cols = vec![T::zero(); ck * locs];
        im2col(&xd[b * s.c_in * s.h * s.w..(b + 1) * s.c_in * s.h * s.w], &s, &mut cols);
        gemm(s.c_out, ck, locs, wd, false, &cols, false, ob, T::zero());
        for co in 0..s.c_out {
            let beta = bd[co];
            for v in &mut ob[co * locs..(co + 1) * locs] {
                *v += beta;
            }
        }
    });
    Array::from_vec(&[s.batch, s.c_out, s.h_out, s.w_out], out)
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation with bias: x [B,Ci,H,W] * w [Co,Ci,kh,kw] + b [Co].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Var {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = self.value(b).clone();
        let out = conv2d_forward(&xv, &wv, &bv, stride, padding);
        let s = conv_spec(xv.shape(), wv.shape(), stride, padding);
        self.push(out, vec![x, w, b], move || {
            Box::new(move |g, needs| {
                let ck = s.c_in * s.kh * s.kw;
                let locs = s.h_out * s.w_out;
                let gd = g.data();
                let xd = xv.data();
                let wd = wv.data();

                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); xv.numel()];
                    dx.par_chunks_mut(s.c_in * s.h * s.w).enumerate().for_each(|(b, dxb)| {
                        let mut dcols = vec![T::zero(); ck * locs];
                        gemm(
                            ck,
                            s.c_out,
                            locs,
                            wd,
                            true,
                            &gd[b * s.c_out * locs..(b + 1) * s.c_out * locs],
                            false,
                            &mut dcols,
                            T::zero(),
                        );
                        col2im(&dcols, &s, dxb);
                    });
                    Array::from_vec(xv.shape(), dx)
                });

                let dw = needs[1].then(|| {
                    // per-image partials in parallel, then a fixed-order sum
                    let partials: Vec<Vec<T>> = (0..s.batch)
                        .into_par_iter()
                        .map(|b| {
                            let mut cols = vec![T::zero(); ck * locs];
                            im2col(
                                &xd[b * s.c_in * s.h * s.w..(b + 1) * s.c_in * s.h * s.w],
                                &s,
                                &mut cols,
                            );
                            let mut dwb = vec![T::zero(); wv.numel()];
                            // dW_b = G_b [Co, locs] * cols^T [locs, ck]
                            gemm(
                                s.c_out,
                                locs,
                                ck,
                                &gd[b * s.c_out * locs..(b + 1) * s.c_out * locs],
                                false,
                                &cols,
                                true,
                                &mut dwb,
                                T::zero(),
                            );
                            dwb
                        })
                        .collect();
                    let mut dw = vec![T::zero(); wv.numel()];
                    for p in partials {
                        for (d, v) in dw.iter_mut().zip(p) {
                            *d += v;
                        }
                    }
                    Array::from_vec(wv.shape(), dw)
                });

                let db = needs[2].then(|| {
                    let mut db = vec![T::zero(); s.c_out];
                    for b in 0..s.batch {
                        for co in 0..s.c_out {
                            let base = (b * s.c_out + co) * locs;
                            let mut acc = T::zero();
                            for &v in &gd[base..base + locs] {
                                acc += v;
                            }
                            db[co] += acc;
                        }
                    }
                    Array::from_vec(&[s.c_out], db)
                });

                vec![dx, dw, db]
            })
        })
    }

    /// Depthwise 3x3 convolution, stride 1, padding 1; one filter per
    /// channel, w [C,1,3,3], b [C]. Channel c of the output depends only
    /// on channel c of the input.
    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = self.value(b).clone();
        let (batch, c, h, wd_) = {
            let s = xv.shape();
            assert_eq!(s.len(), 4, "depthwise input must be [B,C,H,W]");
            (s[0], s[1], s[2], s[3])
        };
        assert_eq!(
            wv.shape(),
            &[c, 1, 3, 3],
            "depthwise weight must be [C,1,3,3] with C = {c}"
        );
        assert_eq!(bv.shape(), &[c], "depthwise bias must be [C]");
        let plane = h * wd_;
        let mut out = vec![T::zero(); xv.numel()];
        {
            let xd = xv.data();
            let wd = wv.data();
            let bd = bv.data();
            out.par_chunks_mut(plane).enumerate().for_each(|(bc, ob)| {
                let ch = bc % c;
                let xp = &xd[bc * plane..(bc + 1) * plane];
                let k = &wd[ch * 9..ch * 9 + 9];
                depthwise_plane(xp, k, bd[ch], h, wd_, ob);
            });
        }
        let out = Array::from_vec(xv.shape(), out);
        self.push(out, vec![x, w, b], move || {
            Box::new(move |g, needs| {
                let gd = g.data();
                let xd = xv.data();
                let wdd = wv.data();
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); xv.numel()];
                    dx.par_chunks_mut(plane).enumerate().for_each(|(bc, dxp)| {
                        let ch = bc % c;
                        let gp = &gd[bc * plane..(bc + 1) * plane];
                        let k = &wdd[ch * 9..ch * 9 + 9];
                        // dX = full correlation of G with flipped kernel
                        for oy in 0..h {
                            for ox in 0..wd_ {
                                let gv = gp[oy * wd_ + ox];
                                if gv == T::zero() {
                                    continue;
                                }
                                for ky in 0..3usize {
                                    let iy = oy as isize + ky as isize - 1;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..3usize {
                                        let ix = ox as isize + kx as isize - 1;
                                        if ix < 0 || ix >= wd_ as isize {
                                            continue;
                                        }
                                        dxp[iy as usize * wd_ + ix as usize] += gv * k[ky * 3 + kx];
                                    }
                                }
                            }
                        }
                    });
                    Array::from_vec(xv.shape(), dx)
                });
                let dw = needs[1].then(|| {
                    let mut dw = vec![T::zero(); c * 9];
                    for b in 0..batch {
                        for ch in 0..c {
                            let xp = &xd[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                            let gp = &gd[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                            for ky in 0..3usize {
                                for kx in 0..3usize {
                                    let mut acc = T::zero();
                                    for oy in 0..h {
                                        let iy = oy as isize + ky as isize - 1;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for ox in 0..wd_ {
                                            let ix = ox as isize + kx as isize - 1;
                                            if ix < 0 || ix >= wd_ as isize {
                                                continue;
                                            }
                                            acc += gp[oy * wd_ + ox] * xp[iy as usize * wd_ + ix as usize];
                                        }
                                    }
                                    dw[ch * 9 + ky * 3 + kx] += acc;
                                }
                            }
                        }
                    }
                    Array::from_vec(&[c, 1, 3, 3], dw)
                });
                let db = needs[2].then(|| {
                    let mut db = vec![T::zero(); c];
                    for b in 0..batch {
                        for ch in 0..c {
                            let base = (b * c + ch) * plane;
                            let mut acc = T::zero();
                            for &v in &gd[base..base + plane] {
                                acc += v;
                            }
                            db[ch] += acc;
                        }
                    }
                    Array::from_vec(&[c], db)
                });
                vec![dx, dw, db]
            })
        })
    }
}

fn depthwise_plane<T: Scalar>(x: &[T], k: &[T], bias: T, h: usize, w: usize, out: &mut [T]) {
    for oy in 0..h {
        for ox in 0..w {
            let mut acc = bias;
            for ky in 0..3usize {
                let iy = oy as isize + ky as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..3usize {
                    let ix = ox as isize + kx as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    acc += k[ky * 3 + kx] * x[iy as usize * w + ix as usize];
                }
            }
            out[oy * w + ox] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_conv(
        x: (Vec<usize>, Vec<f64>),
        w: (Vec<usize>, Vec<f64>),
        b: Vec<f64>,
        stride: usize,
        padding: usize,
    ) -> Array<f64> {
        let mut g = Graph::<f64>::new();
        let xs = g.leaf(Array::from_vec(&x.0, x.1), false);
        let ws = g.leaf(Array::from_vec(&w.0, w.1), false);
        let bl = b.len();
        let bs = g.leaf(Array::from_vec(&[bl], b), false);
        let y = g.conv2d(xs, ws, bs, stride, padding);
        g.value(y).clone()
    }

    #[test]
    fn all_ones_kernel_center_sums_neighborhood() {
        // 3x3 grid 1..9, all-ones 3x3 kernel, pad 1: center output = 45.
        let y = graph_conv(
            (vec![1, 1, 3, 3], (1..=9).map(|i| i as f64).collect()),
            (vec![1, 1, 3, 3], vec![1.0; 9]),
            vec![0.0],
            1,
            1,
        );
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[4], 45.0);
        // corner (0,0) sees 1,2,4,5 -> 12
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn identity_kernel_is_identity_map() {
        let xdata: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| (i as f64) * 0.17 - 3.0).collect();
        let mut w = vec![0.0; 3 * 3 * 3 * 3];
        // w[co][ci][1][1] = 1 iff co == ci
        for c in 0..3 {
            w[c * 27 + c * 9 + 4] = 1.0;
        }
        let y = graph_conv(
            (vec![2, 3, 4, 4], xdata.clone()),
            (vec![3, 3, 3, 3], w),
            vec![0.0; 3],
            1,
            1,
        );
        assert_eq!(y.data(), &xdata[..]);
    }

    #[test]
    fn stride_two_shape() {
        let y = graph_conv(
            (vec![1, 1, 8, 8], vec![1.0; 64]),
            (vec![2, 1, 3, 3], vec![0.5; 18]),
            vec![1.0, -1.0],
            2,
            1,
        );
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
    }

    #[test]
    fn depthwise_identity_and_all_ones() {
        let mut g = Graph::<f64>::new();
        let xdata: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| i as f64 * 0.3).collect();
        let x = g.leaf(Array::from_vec(&[2, 2, 4, 4], xdata.clone()), false);
        let mut wid = vec![0.0; 2 * 9];
        wid[4] = 1.0;
        wid[9 + 4] = 1.0;
        let w = g.leaf(Array::from_vec(&[2, 1, 3, 3], wid), false);
        let b = g.leaf(Array::from_vec(&[2], vec![0.0, 0.0]), false);
        let y = g.depthwise_conv2d(x, w, b);
        assert_eq!(g.value(y).data(), &xdata[..]);

        // all-ones kernel over constant 2.0 input: interior = 18
        let x2 = g.leaf(Array::full(&[1, 1, 5, 5], 2.0), false);
        let w2 = g.leaf(Array::full(&[1, 1, 3, 3], 1.0), false);
        let b2 = g.leaf(Array::zeros(&[1]), false);
        let y2 = g.depthwise_conv2d(x2, w2, b2);
        assert_eq!(g.value(y2).data()[6], 18.0);
        assert_eq!(g.value(y2).data()[0], 8.0); // corner sees 4 cells
    }

    #[test]
    #[should_panic(expected = "channels")]
    fn channel_mismatch_panics() {
        graph_conv(
            (vec![1, 2, 4, 4], vec![0.0; 32]),
            (vec![1, 3, 3, 3], vec![0.0; 27]),
            vec![0.0],
            1,
            1,
        );
    }
}
