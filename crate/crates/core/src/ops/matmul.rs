//! Dense matrix products backed by BLAS-style GEMM kernels.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};

/// out(m,n) += a(m,k) * b(k,n), with optional logical transposes of the
/// stored operands (no materialized transpose). `beta` scales the existing
/// contents of `out`.
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    out: &mut [T],
    beta: T,
) {
    assert_eq!(a.len(), m * k, "gemm: A size");
    assert_eq!(b.len(), k * n, "gemm: B size");
    assert_eq!(out.len(), m * n, "gemm: C size");
    let (rsa, csa) = if ta { (1isize, m as isize) } else { (k as isize, 1isize) };
    let (rsb, csb) = if tb { (1isize, k as isize) } else { (n as isize, 1isize) };
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<T: Scalar> Graph<T> {
    /// [M,K] x [K,N] -> [M,N].
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (kb, n) = (bv.shape()[0], bv.shape()[1]);
        assert_eq!(av.shape().len(), 2, "matmul lhs must be 2-D");
        assert_eq!(bv.shape().len(), 2, "matmul rhs must be 2-D");
        assert_eq!(k, kb, "matmul inner dims {k} vs {kb}");
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, T::zero());
        self.push(Array::from_vec(&[m, n], out), vec![a, b], move || {
            Box::new(move |g, needs| {
                let gd = g.data();
                let da = needs[0].then(|| {
                    let mut da = vec![T::zero(); m * k];
                    // dA = G * B^T
                    gemm(m, n, k, gd, false, bv.data(), true, &mut da, T::zero());
                    Array::from_vec(&[m, k], da)
                });
                let db = needs[1].then(|| {
                    let mut db = vec![T::zero(); k * n];
                    // dB = A^T * G
                    gemm(k, m, n, av.data(), true, gd, false, &mut db, T::zero());
                    Array::from_vec(&[k, n], db)
                });
                vec![da, db]
            })
        })
    }

    /// Batched matmul: [B,M,K] x [B,K,N] -> [B,M,N].
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        assert_eq!(av.shape().len(), 3, "bmm lhs must be 3-D");
        assert_eq!(bv.shape().len(), 3, "bmm rhs must be 3-D");
        let (nb, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        let (nb2, kb, n) = (bv.shape()[0], bv.shape()[1], bv.shape()[2]);
        assert_eq!(nb, nb2, "bmm batch dims");
        assert_eq!(k, kb, "bmm inner dims");
        let mut out = vec![T::zero(); nb * m * n];
        for i in 0..nb {
            gemm(
                m,
                k,
                n,
                &av.data()[i * m * k..(i + 1) * m * k],
                false,
                &bv.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                T::zero(),
            );
        }
        self.push(Array::from_vec(&[nb, m, n], out), vec![a, b], move || {
            Box::new(move |g, needs| {
                let gd = g.data();
                let da = needs[0].then(|| {
                    let mut da = vec![T::zero(); nb * m * k];
                    for i in 0..nb {
                        gemm(
                            m,
                            n,
                            k,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &bv.data()[i * k * n..(i + 1) * k * n],
                            true,
                            &mut da[i * m * k..(i + 1) * m * k],
                            T::zero(),
                        );
                    }
                    Array::from_vec(&[nb, m, k], da)
                });
                let db = needs[1].then(|| {
                    let mut db = vec![T::zero(); nb * k * n];
                    for i in 0..nb {
                        gemm(
                            k,
                            m,
                            n,
                            &av.data()[i * m * k..(i + 1) * m * k],
                            true,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &mut db[i * k * n..(i + 1) * k * n],
                            T::zero(),
                        );
                    }
                    Array::from_vec(&[nb, k, n], db)
                });
                vec![da, db]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_case() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Array::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]), true);
        let b = g.leaf(Array::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]), true);
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[58., 64., 139., 154.]);
        let loss = g.sum_all(c);
        g.backward(loss);
        // dA = ones(2,2) @ B^T
        assert_eq!(g.grad(a).unwrap().data(), &[15., 19., 23., 15., 19., 23.]);
        assert_eq!(g.grad(b).unwrap().data(), &[5., 5., 7., 7., 9., 9.]);
    }

    #[test]
    fn bmm_matches_per_batch_matmul() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Array::from_vec(&[2, 1, 2], vec![1., 2., 3., 4.]), false);
        let b = g.leaf(Array::from_vec(&[2, 2, 1], vec![5., 6., 7., 8.]), false);
        let c = g.bmm(a, b);
        assert_eq!(g.value(c).shape(), &[2, 1, 1]);
        assert_eq!(g.value(c).data(), &[17., 53.]);
    }
}
