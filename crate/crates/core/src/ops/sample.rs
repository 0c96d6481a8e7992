//! Bilinear gathering at continuous coordinates (the sampling primitive
//! behind deformable convolution).
//!
//! Coordinates are absolute pixel units in (y, x) order. Samples outside
//! the image read zero: a fetch only collects the in-bounds corners, so a
//! fully out-of-bounds sample is 0 with zero gradient everywhere.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use rayon::prelude::*;

impl<T: Scalar> Graph<T> {
    /// x: [B,C,H,W], coords: [B,K,Hc,Wc,2] -> out [B,C,K,Hc,Wc].
    pub fn grid_sample_bilinear(&mut self, x: Var, coords: Var) -> Var {
        let xv = self.value(x).clone();
        let cv = self.value(coords).clone();
        let xs = xv.shape().to_vec();
        let cs = cv.shape().to_vec();
        assert_eq!(xs.len(), 4, "grid_sample input must be [B,C,H,W]");
        assert_eq!(cs.len(), 5, "grid_sample coords must be [B,K,Hc,Wc,2]");
        assert_eq!(cs[4], 2, "grid_sample coords last dim must be 2 (y,x)");
        assert_eq!(xs[0], cs[0], "grid_sample batch mismatch");
        let (batch, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, hc, wc) = (cs[1], cs[2], cs[3]);
        let locs = k * hc * wc;
        let out_shape = vec![batch, c, k, hc, wc];

        let mut out = vec![T::zero(); batch * c * locs];
        {
            let xd = xv.data();
            let cd = cv.data();
            out.par_chunks_mut(c * locs).enumerate().for_each(|(b, ob)| {
                let cb = &cd[b * locs * 2..(b + 1) * locs * 2];
                let xb = &xd[b * c * h * w..(b + 1) * c * h * w];
                for l in 0..locs {
                    let qy = cb[l * 2].to_f64_();
                    let qx = cb[l * 2 + 1].to_f64_();
                    let (corners, n) = corner_weights(qy, qx, h, w);
                    for ch in 0..c {
                        let plane = &xb[ch * h * w..(ch + 1) * h * w];
                        let mut acc = T::zero();
                        for (idx, wt) in corners.iter().take(n) {
                            acc += plane[*idx] * T::from_f64(*wt);
                        }
                        ob[ch * locs + l] = acc;
                    }
                }
            });
        }
        let out = Array::from_vec(&out_shape, out);
        self.push(out, vec![x, coords], move || {
            Box::new(move |g, needs| {
                let gd = g.data();
                let xd = xv.data();
                let cd = cv.data();
                let want_dx = needs[0];
                let want_dc = needs[1];
                // per-image gradients are independent: run the batch in
                // parallel, each element writing its own slices
                let per_batch: Vec<(Vec<T>, Vec<T>)> = (0..batch)
                    .into_par_iter()
                    .map(|b| {
                        let mut dxb = if want_dx { vec![T::zero(); c * h * w] } else { Vec::new() };
                        let mut dcb = if want_dc { vec![T::zero(); locs * 2] } else { Vec::new() };
                        let cb = &cd[b * locs * 2..(b + 1) * locs * 2];
                        for l in 0..locs {
                            let qy = cb[l * 2].to_f64_();
                            let qx = cb[l * 2 + 1].to_f64_();
                            let parts = corner_parts(qy, qx, h, w);
                            for ch in 0..c {
                                let gv = gd[(b * c + ch) * locs + l];
                                if gv == T::zero() {
                                    continue;
                                }
                                let plane_base = (b * c + ch) * h * w;
                                if want_dx {
                                    for p in parts.iter().flatten() {
                                        dxb[ch * h * w + p.idx] += gv * T::from_f64(p.w);
                                    }
                                }
                                if want_dc {
                                    let mut dy = 0.0;
                                    let mut dxx = 0.0;
                                    for p in parts.iter().flatten() {
                                        let v = xd[plane_base + p.idx].to_f64_();
                                        dy += p.dw_dy * v;
                                        dxx += p.dw_dx * v;
                                    }
                                    dcb[l * 2] += gv * T::from_f64(dy);
                                    dcb[l * 2 + 1] += gv * T::from_f64(dxx);
                                }
                            }
                        }
                        (dxb, dcb)
                    })
                    .collect();
                let dx = want_dx.then(|| {
                    let mut dx = Vec::with_capacity(batch * c * h * w);
                    for (dxb, _) in &per_batch {
                        dx.extend_from_slice(dxb);
                    }
                    Array::from_vec(&[batch, c, h, w], dx)
                });
                let dcoords = want_dc.then(|| {
                    let mut dc = Vec::with_capacity(batch * locs * 2);
                    for (_, dcb) in &per_batch {
                        dc.extend_from_slice(dcb);
                    }
                    Array::from_vec(&[batch, k, hc, wc, 2], dc)
                });
                vec![dx, dcoords]
            })
        })
    }
}

/// In-bounds corners of the bilinear fetch at (qy, qx) with their weights.
fn corner_weights(qy: f64, qx: f64, h: usize, w: usize) -> ([(usize, f64); 4], usize) {
    let mut out = [(0usize, 0.0f64); 4];
    let mut n = 0;
    let y0 = qy.floor();
    let x0 = qx.floor();
    let fy = qy - y0;
    let fx = qx - x0;
    for (dy, wy) in [(0i64, 1.0 - fy), (1i64, fy)] {
        let yy = y0 as i64 + dy;
        if yy < 0 || yy >= h as i64 || wy == 0.0 {
            continue;
        }
        for (dx, wx) in [(0i64, 1.0 - fx), (1i64, fx)] {
            let xx = x0 as i64 + dx;
            if xx < 0 || xx >= w as i64 || wx == 0.0 {
                continue;
            }
            out[n] = ((yy as usize) * w + xx as usize, wy * wx);
            n += 1;
        }
    }
    (out, n)
}

struct CornerPart {
    idx: usize,
    w: f64,
    dw_dy: f64,
    dw_dx: f64,
}

/// Corners with weight and weight-derivatives w.r.t. the coordinates.
fn corner_parts(qy: f64, qx: f64, h: usize, w: usize) -> [Option<CornerPart>; 4] {
    let y0 = qy.floor();
    let x0 = qx.floor();
    let fy = qy - y0;
    let fx = qx - x0;
    let mut out = [None, None, None, None];
    let mut n = 0;
    for (dy, wy, dwy) in [(0i64, 1.0 - fy, -1.0), (1i64, fy, 1.0)] {
        let yy = y0 as i64 + dy;
        if yy < 0 || yy >= h as i64 {
            continue;
        }
        for (dx, wx, dwx) in [(0i64, 1.0 - fx, -1.0), (1i64, fx, 1.0)] {
            let xx = x0 as i64 + dx;
            if xx < 0 || xx >= w as i64 {
                continue;
            }
            out[n] = Some(CornerPart {
                idx: (yy as usize) * w + xx as usize,
                w: wy * wx,
                dw_dy: dwy * wx,
                dw_dx: wy * dwx,
            });
            n += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(xv: Array<f64>, coords: Array<f64>) -> Array<f64> {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(xv, false);
        let c = g.leaf(coords, false);
        let y = g.grid_sample_bilinear(x, c);
        g.value(y).clone()
    }

    #[test]
    fn integer_coords_read_exact_pixels() {
        let x = Array::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]);
        let coords = Array::from_vec(&[1, 1, 1, 4, 2], vec![0., 0., 0., 1., 1., 0., 1., 1.]);
        let y = sample(x, coords);
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn midpoint_interpolates() {
        let x = Array::from_vec(&[1, 1, 1, 2], vec![1., 2.]);
        let coords = Array::from_vec(&[1, 1, 1, 1, 2], vec![0.0, 0.5]);
        let y = sample(x, coords);
        assert!((y.data()[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fully_outside_reads_zero_with_zero_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]), true);
        let c = g.leaf(Array::from_vec(&[1, 1, 1, 1, 2], vec![-1.0, -1.0]), true);
        let y = g.grid_sample_bilinear(x, c);
        assert_eq!(g.value(y).data(), &[0.0]);
        let loss = g.sum_all(y);
        g.backward(loss);
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.grad(c).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn partially_outside_uses_inside_corners_only() {
        // point (-0.5, 0): corners at y=-1 (out) and y=0 (in), weight 0.5
        let x = Array::from_vec(&[1, 1, 2, 1], vec![8., 2.]);
        let coords = Array::from_vec(&[1, 1, 1, 1, 2], vec![-0.5, 0.0]);
        let y = sample(x, coords);
        assert!((y.data()[0] - 4.0).abs() < 1e-12);
    }
}
