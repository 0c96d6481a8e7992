//! Bilinear resizing with half-pixel centers (align_corners = false).
//! Source coordinates are clamped to the image, so boundary rows/columns
//! replicate. The backward pass splats with the same weights.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};

/// Per output index: two source indices and the weight of the second.
fn axis_plan(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let clamped = src.max(0.0).min((n_in - 1) as f64);
            let i0 = clamped.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, clamped - i0 as f64)
        })
        .collect()
}

pub fn bilinear_resize_array<T: Scalar>(x: &Array<T>, h_out: usize, w_out: usize) -> Array<T> {
    let s = x.shape();
    assert_eq!(s.len(), 4, "bilinear_resize input must be [B,C,H,W]");
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let ys = axis_plan(h, h_out);
    let xs = axis_plan(w, w_out);
    let xd = x.data();
    let mut out = vec![T::zero(); planes * h_out * w_out];
    for p in 0..planes {
        let src = &xd[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h_out * w_out..(p + 1) * h_out * w_out];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let fy = T::from_f64(fy);
            let r0 = &src[y0 * w..y0 * w + w];
            let r1 = &src[y1 * w..y1 * w + w];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let fx = T::from_f64(fx);
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                dst[oy * w_out + ox] = top + (bot - top) * fy;
            }
        }
    }
    Array::from_vec(&[s[0], s[1], h_out, w_out], out)
}

impl<T: Scalar> Graph<T> {
    pub fn bilinear_resize(&mut self, x: Var, h_out: usize, w_out: usize) -> Var {
        let xv = self.value(x).clone();
        let out = bilinear_resize_array(&xv, h_out, w_out);
        let in_shape = xv.shape().to_vec();
        self.push(out, vec![x], move || {
            let in_shape = in_shape.clone();
            Box::new(move |g, _| {
                let (planes, h, w) = (in_shape[0] * in_shape[1], in_shape[2], in_shape[3]);
                let ys = axis_plan(h, h_out);
                let xs = axis_plan(w, w_out);
                let gd = g.data();
                let mut dx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    let gsrc = &gd[p * h_out * w_out..(p + 1) * h_out * w_out];
                    let dst = &mut dx[p * h * w..(p + 1) * h * w];
                    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                        let fy = T::from_f64(fy);
                        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                            let fx = T::from_f64(fx);
                            let gv = gsrc[oy * w_out + ox];
                            let one = T::one();
                            dst[y0 * w + x0] += gv * (one - fy) * (one - fx);
                            dst[y0 * w + x1] += gv * (one - fy) * fx;
                            dst[y1 * w + x0] += gv * fy * (one - fx);
                            dst[y1 * w + x1] += gv * fy * fx;
                        }
                    }
                }
                vec![Some(Array::from_vec(&in_shape, dx))]
            })
        })
    }

    /// Doubles both spatial extents.
    pub fn upsample_x2(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let (h, w) = (s[2], s[3]);
        self.bilinear_resize(x, h * 2, w * 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Array::<f64>::full(&[1, 1, 3, 3], 7.5);
        let y = bilinear_resize_array(&x, 6, 6);
        assert!(y.data().iter().all(|&v| (v - 7.5).abs() < 1e-12));
    }

    #[test]
    fn ramp_interpolates_per_half_pixel_rule() {
        // 1-D ramp [0, 2] widened to 4: samples at src -0.25, 0.25, 0.75, 1.25
        // clamped -> 0, 0.5, 1.5, 2
        let x = Array::<f64>::from_vec(&[1, 1, 1, 2], vec![0.0, 2.0]);
        let y = bilinear_resize_array(&x, 1, 4);
        let d = y.data();
        assert!((d[0] - 0.0).abs() < 1e-12);
        assert!((d[1] - 0.5).abs() < 1e-12);
        assert!((d[2] - 1.5).abs() < 1e-12);
        assert!((d[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn backward_conserves_mass() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]), true);
        let y = g.upsample_x2(x);
        let loss = g.sum_all(y);
        g.backward(loss);
        let total: f64 = g.grad(x).unwrap().data().iter().sum();
        // Sum of output = weighted sum of inputs; weights sum to 16.
        assert!((total - 16.0).abs() < 1e-9);
    }
}
