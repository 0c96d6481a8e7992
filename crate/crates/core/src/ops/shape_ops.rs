//! Shape manipulation: reshape, permute, narrow (slice), concat, flip.

use crate::array::{numel_of, strides_of, Array, Scalar};
use crate::graph::{Graph, Var};

fn permute_rec<T: Scalar>(
    dim: usize,
    ext: &[usize],
    stride: &[usize],
    xd: &[T],
    off: usize,
    out: &mut Vec<T>,
) {
    if dim + 1 == ext.len() {
        let n = ext[dim];
        if stride[dim] == 1 {
            out.extend_from_slice(&xd[off..off + n]);
        } else {
            let s = stride[dim];
            out.extend((0..n).map(|i| xd[off + i * s]));
        }
        return;
    }
    for i in 0..ext[dim] {
        permute_rec(dim + 1, ext, stride, xd, off + i * stride[dim], out);
    }
}

fn permute_array<T: Scalar>(x: &Array<T>, perm: &[usize]) -> Array<T> {
    let rank = x.shape().len();
    assert_eq!(perm.len(), rank, "permute rank mismatch");
    let mut seen = vec![false; rank];
    for &p in perm {
        assert!(p < rank && !seen[p], "invalid permutation {perm:?}");
        seen[p] = true;
    }
    let in_strides = strides_of(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let src_stride: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    // coalesce adjacent out dims that remain adjacent in the source
    let mut ext = Vec::with_capacity(rank);
    let mut st: Vec<usize> = Vec::with_capacity(rank);
    for d in 0..rank {
        if out_shape[d] == 1 {
            continue;
        }
        if let Some(&last) = st.last() {
            if last == src_stride[d] * out_shape[d] {
                let k = ext.len() - 1;
                ext[k] *= out_shape[d];
                *st.last_mut().expect("nonempty") = src_stride[d];
                continue;
            }
        }
        ext.push(out_shape[d]);
        st.push(src_stride[d]);
    }
    if ext.is_empty() {
        ext.push(1);
        st.push(0);
    }
    let mut out = Vec::with_capacity(x.numel());
    permute_rec(0, &ext, &st, x.data(), 0, &mut out);
    Array::from_vec(&out_shape, out)
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Split a shape at `axis` into (outer, extent, inner) where inner is the
/// contiguous tail product.
fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Graph<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let xv = self.value(x).clone();
        let in_shape = xv.shape().to_vec();
        let out = xv.reshaped(shape);
        self.push(out, vec![x], move || {
            let in_shape = in_shape.clone();
            Box::new(move |g, _| vec![Some(g.reshaped(&in_shape))])
        })
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Var {
        let out = permute_array(self.value(x), perm);
        let inv = inverse_perm(perm);
        self.push(out, vec![x], move || {
            Box::new(move |g, _| vec![Some(permute_array(g, &inv))])
        })
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xv = self.value(x).clone();
        let shape = xv.shape().to_vec();
        assert!(axis < shape.len(), "narrow axis out of range");
        assert!(start + len <= shape[axis], "narrow range out of bounds");
        let (outer, extent, inner) = outer_inner(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut out = Vec::with_capacity(numel_of(&out_shape));
        let xd = xv.data();
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        self.push(Array::from_vec(&out_shape, out), vec![x], move || {
            let shape = shape.clone();
            Box::new(move |g, _| {
                let gd = g.data();
                let mut dx = vec![T::zero(); numel_of(&shape)];
                for o in 0..outer {
                    let dst = (o * extent + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                vec![Some(Array::from_vec(&shape, dx))]
            })
        })
    }

    /// Concatenate along `axis`; all other extents must match.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of zero tensors");
        let first = self.value(xs[0]).shape().to_vec();
        let mut sizes = Vec::with_capacity(xs.len());
        let mut total = 0usize;
        for &v in xs {
            let s = self.value(v).shape();
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in s.iter().zip(first.iter()).enumerate() {
                assert!(d == axis || a == b, "concat extent mismatch on dim {d}");
            }
            sizes.push(s[axis]);
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = outer_inner(&out_shape, axis);
        let mut out = vec![T::zero(); numel_of(&out_shape)];
        for o in 0..outer {
            let mut dst = o * total * inner;
            for (i, &v) in xs.iter().enumerate() {
                let chunk = sizes[i] * inner;
                let src = o * chunk;
                out[dst..dst + chunk].copy_from_slice(&self.value(v).data()[src..src + chunk]);
                dst += chunk;
            }
        }
        let sizes_c = sizes.clone();
        self.push(Array::from_vec(&out_shape, out), xs.to_vec(), move || {
            Box::new(move |g, needs| {
                let gd = g.data();
                let mut grads = Vec::with_capacity(sizes_c.len());
                let mut offset = 0usize;
                for (i, &sz) in sizes_c.iter().enumerate() {
                    if needs[i] {
                        let mut part = Vec::with_capacity(outer * sz * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            part.extend_from_slice(&gd[base..base + sz * inner]);
                        }
                        let mut shp = g.shape().to_vec();
                        shp[axis] = sz;
                        grads.push(Some(Array::from_vec(&shp, part)));
                    } else {
                        grads.push(None);
                    }
                    offset += sz;
                }
                grads
            })
        })
    }

    /// Reverse along `axis`.
    pub fn flip(&mut self, x: Var, axis: usize) -> Var {
        let out = flip_array(self.value(x), axis);
        self.push(out, vec![x], move || {
            Box::new(move |g, _| vec![Some(flip_array(g, axis))])
        })
    }
}

pub fn flip_array<T: Scalar>(x: &Array<T>, axis: usize) -> Array<T> {
    let shape = x.shape();
    assert!(axis < shape.len(), "flip axis out of range");
    let (outer, extent, inner) = outer_inner(shape, axis);
    let xd = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for o in 0..outer {
        for e in 0..extent {
            let src = (o * extent + e) * inner;
            let dst = (o * extent + (extent - 1 - e)) * inner;
            out[dst..dst + inner].copy_from_slice(&xd[src..src + inner]);
        }
    }
    Array::from_vec(shape, out)
}
