//! Reductions over a set of axes: sum, mean, max.
//!
//! Multi-axis reductions decompose into single-axis passes in descending
//! axis order; each pass views the tensor as [outer, extent, inner] and
//! runs contiguous inner loops. For max, each pass keeps the first maximal
//! element (strict comparison, ascending scan), so the composed reduction
//! routes its gradient to the first maximum in row-major order.

use crate::array::{sc, Array, Scalar};
use crate::graph::{Graph, Var};

fn normalize_axes(axes: &[usize], rank: usize) -> Vec<usize> {
    let mut axes = axes.to_vec();
    axes.sort_unstable();
    axes.dedup();
    assert!(axes.iter().all(|&a| a < rank), "reduce axis out of range for rank {rank}");
    axes
}

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn keepdims_shape(shape: &[usize], axes: &[usize], keepdims: bool) -> Vec<usize> {
    let mut out = Vec::new();
    for (d, &e) in shape.iter().enumerate() {
        if axes.contains(&d) {
            if keepdims {
                out.push(1);
            }
        } else {
            out.push(e);
        }
    }
    if out.is_empty() {
        out.push(1);
    }
    out
}

impl<T: Scalar> Graph<T> {
    /// Sum along one axis (axis removed from the shape unless it is the
    /// only one).
    fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        let xv = self.value(x).clone();
        let shape = xv.shape().to_vec();
        let (outer, extent, inner) = split_at_axis(&shape, axis);
        let mut out = vec![T::zero(); outer * inner];
        let xd = xv.data();
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for e in 0..extent {
                let src = &xd[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        self.push(Array::from_vec(&out_shape, out), vec![x], move || {
            let shape = shape.clone();
            Box::new(move |g, _| {
                let gd = g.data();
                let mut dx = vec![T::zero(); outer * extent * inner];
                for o in 0..outer {
                    let src = &gd[o * inner..(o + 1) * inner];
                    for e in 0..extent {
                        dx[(o * extent + e) * inner..(o * extent + e + 1) * inner]
                            .copy_from_slice(src);
                    }
                }
                vec![Some(Array::from_vec(&shape, dx))]
            })
        })
    }

    /// First-maximum along one axis.
    fn max_axis(&mut self, x: Var, axis: usize) -> Var {
        let xv = self.value(x).clone();
        let shape = xv.shape().to_vec();
        let (outer, extent, inner) = split_at_axis(&shape, axis);
        let mut out = vec![T::neg_infinity(); outer * inner];
        let mut arg = vec![0u32; outer * inner];
        let xd = xv.data();
        for o in 0..outer {
            for e in 0..extent {
                let base = (o * extent + e) * inner;
                for i in 0..inner {
                    let v = xd[base + i];
                    let oi = o * inner + i;
                    if v > out[oi] {
                        out[oi] = v;
                        arg[oi] = e as u32;
                    }
                }
            }
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        self.push(Array::from_vec(&out_shape, out), vec![x], move || {
            let shape = shape.clone();
            Box::new(move |g, _| {
                let gd = g.data();
                let mut dx = vec![T::zero(); outer * extent * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let oi = o * inner + i;
                        let e = arg[oi] as usize;
                        dx[(o * extent + e) * inner + i] += gd[oi];
                    }
                }
                vec![Some(Array::from_vec(&shape, dx))]
            })
        })
    }

    pub fn reduce_sum(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Var {
        let shape = self.shape(x).to_vec();
        let axes = normalize_axes(axes, shape.len());
        let mut cur = x;
        for &axis in axes.iter().rev() {
            cur = self.sum_axis(cur, axis);
        }
        let target = keepdims_shape(&shape, &axes, keepdims);
        if self.shape(cur) != target.as_slice() {
            cur = self.reshape(cur, &target);
        }
        cur
    }

    pub fn reduce_mean(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Var {
        let in_numel = self.value(x).numel();
        let s = self.reduce_sum(x, axes, keepdims);
        let out_numel = self.value(s).numel();
        let count = in_numel / out_numel;
        self.scale(s, 1.0 / count as f64)
    }

    pub fn reduce_max(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Var {
        let shape = self.shape(x).to_vec();
        let axes = normalize_axes(axes, shape.len());
        let mut cur = x;
        for &axis in axes.iter().rev() {
            cur = self.max_axis(cur, axis);
        }
        let target = keepdims_shape(&shape, &axes, keepdims);
        if self.shape(cur) != target.as_slice() {
            cur = self.reshape(cur, &target);
        }
        cur
    }

    /// Sum of all elements, as a [1] scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.reduce_sum(x, &axes, false)
    }

    /// Mean of all elements, as a [1] scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Global (1,1) adaptive pooling over the spatial axes of [B,C,H,W].
    pub fn adaptive_pool_11(&mut self, x: Var, max_mode: bool) -> Var {
        assert_eq!(self.shape(x).len(), 4, "adaptive_pool_11 expects [B,C,H,W]");
        if max_mode {
            self.reduce_max(x, &[2, 3], true)
        } else {
            self.reduce_mean(x, &[2, 3], true)
        }
    }
}

/// Plain-array mean over all elements (test/metric helper).
pub fn mean_of<T: Scalar>(a: &Array<T>) -> T {
    let n = sc::<T>(a.numel() as f64);
    a.data().iter().copied().sum::<T>() / n
}
