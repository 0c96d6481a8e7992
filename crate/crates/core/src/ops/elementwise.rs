//! Elementwise primitives with NumPy-style broadcasting for binary ops.

use crate::array::{numel_of, sc, strides_of, Array, Scalar};
use crate::graph::{Graph, Var};

/// Broadcast result shape of two operand shapes (right-aligned; extents must
/// match or be 1).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for d in 0..rank {
        let ea = if d + a.len() >= rank { a[d + a.len() - rank] } else { 1 };
        let eb = if d + b.len() >= rank { b[d + b.len() - rank] } else { 1 };
        assert!(
            ea == eb || ea == 1 || eb == 1,
            "shapes {a:?} and {b:?} are not broadcastable"
        );
        out[d] = ea.max(eb);
    }
    out
}

/// Effective strides of `shape` when iterated under `out_shape`
/// (0 where the operand is broadcast).
fn effective_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let strides = strides_of(shape);
    let mut eff = vec![0usize; rank];
    for d in 0..rank {
        if d + shape.len() >= rank {
            let sd = d + shape.len() - rank;
            eff[d] = if shape[sd] == 1 { 0 } else { strides[sd] };
        }
    }
    eff
}

/// Merge adjacent dims whose strides are jointly contiguous across the
/// boundary in every listed stride set. Returns (extents, strides per set).
fn coalesce(shape: &[usize], strides: &[&[usize]]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut ext: Vec<usize> = Vec::with_capacity(shape.len());
    let mut st: Vec<Vec<usize>> = vec![Vec::with_capacity(shape.len()); strides.len()];
    for d in 0..shape.len() {
        if shape[d] == 1 {
            continue; // extent-1 dims never advance any offset
        }
        let mergeable = !ext.is_empty()
            && strides
                .iter()
                .enumerate()
                .all(|(k, s)| st[k].last().copied() == Some(s[d] * shape[d]));
        if mergeable {
            let last = ext.len() - 1;
            ext[last] *= shape[d];
            for (k, s) in strides.iter().enumerate() {
                st[k][last] = s[d];
            }
        } else {
            ext.push(shape[d]);
            for (k, s) in strides.iter().enumerate() {
                st[k].push(s[d]);
            }
        }
    }
    if ext.is_empty() {
        ext.push(1);
        for s in st.iter_mut() {
            s.push(0);
        }
    }
    (ext, st)
}

fn zip_rec<T: Scalar>(
    dim: usize,
    ext: &[usize],
    sa: &[usize],
    sb: &[usize],
    ad: &[T],
    bd: &[T],
    oa: usize,
    ob: usize,
    out: &mut Vec<T>,
    f: &impl Fn(T, T) -> T,
) {
    if dim + 1 == ext.len() {
        let n = ext[dim];
        match (sa[dim], sb[dim]) {
            (1, 1) => {
                let av = &ad[oa..oa + n];
                let bv = &bd[ob..ob + n];
                out.extend(av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)));
            }
            (1, 0) => {
                let bv = bd[ob];
                out.extend(ad[oa..oa + n].iter().map(|&x| f(x, bv)));
            }
            (0, 1) => {
                let av = ad[oa];
                out.extend(bd[ob..ob + n].iter().map(|&y| f(av, y)));
            }
            (pa, pb) => {
                for i in 0..n {
                    out.push(f(ad[oa + i * pa], bd[ob + i * pb]));
                }
            }
        }
        return;
    }
    for i in 0..ext[dim] {
        zip_rec(dim + 1, ext, sa, sb, ad, bd, oa + i * sa[dim], ob + i * sb[dim], out, f);
    }
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
pub fn broadcast_zip<T: Scalar>(a: &Array<T>, b: &Array<T>, f: impl Fn(T, T) -> T) -> Array<T> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let sa = effective_strides(a.shape(), &out_shape);
    let sb = effective_strides(b.shape(), &out_shape);
    let (ext, st) = coalesce(&out_shape, &[&sa, &sb]);
    let mut out = Vec::with_capacity(numel_of(&out_shape));
    zip_rec(0, &ext, &st[0], &st[1], a.data(), b.data(), 0, 0, &mut out, &f);
    Array::from_vec(&out_shape, out)
}

fn accum_rec<T: Scalar>(
    dim: usize,
    ext: &[usize],
    sg: &[usize],
    st: &[usize],
    gd: &[T],
    og: usize,
    ot: usize,
    acc: &mut [T],
) {
    if dim + 1 == ext.len() {
        let n = ext[dim];
        match st[dim] {
            0 => {
                let mut s = T::zero();
                for &v in &gd[og..og + n] {
                    s += v;
                }
                acc[ot] += s;
            }
            1 => {
                let dst = &mut acc[ot..ot + n];
                for (d, &v) in dst.iter_mut().zip(&gd[og..og + n]) {
                    *d += v;
                }
            }
            p => {
                for i in 0..n {
                    acc[ot + i * p] += gd[og + i];
                }
            }
        }
        return;
    }
    for i in 0..ext[dim] {
        accum_rec(dim + 1, ext, sg, st, gd, og + i * sg[dim], ot + i * st[dim], acc);
    }
}

/// Sum `grad` (shaped like the broadcast output) down to `target_shape`.
pub fn reduce_to_shape<T: Scalar>(grad: &Array<T>, target_shape: &[usize]) -> Array<T> {
    if grad.shape() == target_shape {
        return grad.clone();
    }
    let out_shape = grad.shape();
    let sg = strides_of(out_shape);
    let st = effective_strides(target_shape, out_shape);
    let (ext, sts) = coalesce(out_shape, &[&sg, &st]);
    let mut acc = vec![T::zero(); numel_of(target_shape)];
    accum_rec(0, &ext, &sts[0], &sts[1], grad.data(), 0, 0, &mut acc);
    Array::from_vec(target_shape, acc)
}

impl<T: Scalar> Graph<T> {
    fn binary(
        &mut self,
        a: Var,
        b: Var,
        forward: impl Fn(T, T) -> T,
        backward: impl Fn(&Array<T>, &Array<T>, &Array<T>, &[bool]) -> Vec<Option<Array<T>>> + 'static,
    ) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let out = broadcast_zip(&av, &bv, forward);
        self.push(out, vec![a, b], move || {
            Box::new(move |g, needs| backward(g, &av, &bv, needs))
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x + y,
            |g, av, bv, needs| {
                vec![
                    needs[0].then(|| reduce_to_shape(g, av.shape())),
                    needs[1].then(|| reduce_to_shape(g, bv.shape())),
                ]
            },
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x - y,
            |g, av, bv, needs| {
                vec![
                    needs[0].then(|| reduce_to_shape(g, av.shape())),
                    needs[1].then(|| reduce_to_shape(&g.map(|x| -x), bv.shape())),
                ]
            },
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x * y,
            |g, av, bv, needs| {
                vec![
                    needs[0].then(|| reduce_to_shape(&broadcast_zip(g, bv, |gi, bi| gi * bi), av.shape())),
                    needs[1].then(|| reduce_to_shape(&broadcast_zip(g, av, |gi, ai| gi * ai), bv.shape())),
                ]
            },
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| x / y,
            |g, av, bv, needs| {
                vec![
                    needs[0].then(|| reduce_to_shape(&broadcast_zip(g, bv, |gi, bi| gi / bi), av.shape())),
                    needs[1].then(|| {
                        let ga = broadcast_zip(g, av, |gi, ai| gi * ai);
                        let gb = broadcast_zip(&ga, bv, |n, bi| -n / (bi * bi));
                        reduce_to_shape(&gb, bv.shape())
                    }),
                ]
            },
        )
    }

    fn unary(
        &mut self,
        x: Var,
        forward: impl Fn(T) -> T,
        backward: impl Fn(&Array<T>, &Array<T>, &Array<T>) -> Array<T> + 'static,
    ) -> Var {
        let xv = self.value(x).clone();
        let out = xv.map(forward);
        let yv = out.clone();
        self.push(out, vec![x], move || {
            Box::new(move |g, _needs| vec![Some(backward(g, &xv, &yv))])
        })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, |g, _, _| g.map(|v| -v))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), |g, _, y| g.zip_map(y, |gi, yi| gi * yi))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), |g, xv, _| g.zip_map(xv, |gi, xi| gi / xi))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.sqrt(),
            |g, _, y| g.zip_map(y, |gi, yi| gi * sc::<T>(0.5) / yi),
        )
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.recip(), |g, _, y| g.zip_map(y, |gi, yi| -gi * yi * yi))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |g, xv, _| g.zip_map(xv, |gi, xi| if xi > T::zero() { gi } else { T::zero() }),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, stable_sigmoid, |g, _, y| {
            g.zip_map(y, |gi, yi| gi * yi * (T::one() - yi))
        })
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v * stable_sigmoid(v),
            |g, xv, _| {
                g.zip_map(xv, |gi, xi| {
                    let s = stable_sigmoid(xi);
                    gi * (s + xi * s * (T::one() - s))
                })
            },
        )
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, stable_softplus, |g, xv, _| {
            g.zip_map(xv, |gi, xi| gi * stable_sigmoid(xi))
        })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = sc::<T>(c);
        self.unary(x, move |v| v * c, move |g, _, _| g.map(|gi| gi * c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = sc::<T>(c);
        self.unary(x, move |v| v + c, |g, _, _| g.clone())
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        let p = sc::<T>(p);
        self.unary(
            x,
            move |v| v.powf(p),
            move |g, xv, _| g.zip_map(xv, |gi, xi| gi * p * xi.powf(p - T::one())),
        )
    }

    /// max(x, c) elementwise. Gradient is zero where x <= c.
    pub fn clamp_min(&mut self, x: Var, c: f64) -> Var {
        let c = sc::<T>(c);
        self.unary(
            x,
            move |v| if v > c { v } else { c },
            move |g, xv, _| g.zip_map(xv, |gi, xi| if xi > c { gi } else { T::zero() }),
        )
    }
}

#[inline]
pub fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn stable_softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) = max(x, 0) + log(1 + e^{-|x|})
    let m = if x > T::zero() { x } else { T::zero() };
    m + (T::one() + (-x.abs()).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[3, 1]), vec![2, 3, 4]);
        assert_eq!(broadcast_shape(&[1], &[5]), vec![5]);
        assert_eq!(broadcast_shape(&[2, 1, 4], &[2, 3, 1]), vec![2, 3, 4]);
    }

    #[test]
    #[should_panic(expected = "broadcastable")]
    fn incompatible_shapes_panic() {
        broadcast_shape(&[2, 3], &[4]);
    }

    #[test]
    fn channel_broadcast_matches_manual() {
        // [1,2,1,1] bias over [1,2,2,2]
        let x = Array::<f64>::from_vec(&[1, 2, 2, 2], (0..8).map(|i| i as f64).collect());
        let b = Array::<f64>::from_vec(&[1, 2, 1, 1], vec![10.0, 20.0]);
        let y = broadcast_zip(&x, &b, |a, b| a + b);
        assert_eq!(y.data(), &[10.0, 11.0, 12.0, 13.0, 24.0, 25.0, 26.0, 27.0]);
    }

    #[test]
    fn reduce_to_shape_sums_broadcast_axes() {
        let g = Array::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = reduce_to_shape(&g, &[3]);
        assert_eq!(r.data(), &[5.0, 7.0, 9.0]);
        let r2 = reduce_to_shape(&g, &[2, 1]);
        assert_eq!(r2.data(), &[6.0, 15.0]);
        let r3 = reduce_to_shape(&g, &[1]);
        assert_eq!(r3.data(), &[21.0]);
    }

    #[test]
    fn mul_backward_broadcast() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let w = g.leaf(Array::from_vec(&[2, 1], vec![10.0, 100.0]), true);
        let y = g.mul(x, w);
        let loss = g.sum_all(y);
        g.backward(loss);
        assert_eq!(g.grad(x).unwrap().data(), &[10.0, 10.0, 100.0, 100.0]);
        assert_eq!(g.grad(w).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn stable_activations_at_extremes() {
        assert!(stable_sigmoid(1000.0f64).is_finite());
        assert!(stable_sigmoid(-1000.0f64).is_finite());
        assert!(stable_softplus(1000.0f64).is_finite());
        assert!((stable_softplus(-1000.0f64)).abs() < 1e-12);
        assert!((stable_softplus(0.0f64) - 2.0f64.ln()).abs() < 1e-15);
    }
}
