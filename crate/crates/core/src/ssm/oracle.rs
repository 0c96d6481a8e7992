//! Naive step-by-step scan used only to verify the fused implementation.
//! It materializes the discretized operators via `discretize` and walks the
//! recurrence one step at a time, independently of the fused kernel.

use crate::array::{Array, Scalar};
use crate::ssm::scan::discretize;

/// O(L) step-loop reference: same contract as the fused scan.
pub fn reference_scan<T: Scalar>(
    x: &Array<T>,
    delta: &Array<T>,
    a: &Array<T>,
    b: &Array<T>,
    c: &Array<T>,
    d: &Array<T>,
) -> Array<T> {
    let (batch, l, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = a.shape()[1];
    let mut y = vec![T::zero(); batch * l * ch];
    for bi in 0..batch {
        let xb = &x.data()[bi * l * ch..(bi + 1) * l * ch];
        let db = &delta.data()[bi * l * ch..(bi + 1) * l * ch];
        let bb = &b.data()[bi * l * n..(bi + 1) * l * n];
        let cb = &c.data()[bi * l * n..(bi + 1) * l * n];
        let delta_b = Array::from_vec(&[l, ch], db.to_vec());
        let b_b = Array::from_vec(&[l, n], bb.to_vec());
        let (abar, bbar) = discretize(&delta_b, a, &b_b);
        let mut h = vec![T::zero(); ch * n];
        for t in 0..l {
            for cc in 0..ch {
                let mut acc = T::zero();
                for s in 0..n {
                    let idx = (t * ch + cc) * n + s;
                    h[cc * n + s] =
                        abar.data()[idx] * h[cc * n + s] + bbar.data()[idx] * xb[t * ch + cc];
                    acc += cb[t * n + s] * h[cc * n + s];
                }
                y[(bi * l + t) * ch + cc] = acc + d.data()[cc] * xb[t * ch + cc];
            }
        }
    }
    Array::from_vec(&[batch, l, ch], y)
}
