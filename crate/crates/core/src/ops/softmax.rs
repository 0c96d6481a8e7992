//! Numerically stable log-softmax along an axis.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};

fn lines(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Graph<T> {
    /// log(softmax(x)) along `axis`, with max subtraction.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Var {
        let xv = self.value(x).clone();
        let shape = xv.shape().to_vec();
        assert!(axis < shape.len(), "log_softmax axis out of range");
        let (outer, extent, inner) = lines(&shape, axis);
        let xd = xv.data();
        let mut out = vec![T::zero(); xv.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                let mut mx = T::neg_infinity();
                for e in 0..extent {
                    let v = xd[base + e * inner];
                    if v > mx {
                        mx = v;
                    }
                }
                let mut sum = T::zero();
                for e in 0..extent {
                    sum += (xd[base + e * inner] - mx).exp();
                }
                let lse = mx + sum.ln();
                for e in 0..extent {
                    out[base + e * inner] = xd[base + e * inner] - lse;
                }
            }
        }
        let yv = Array::from_vec(&shape, out);
        let y_saved = yv.clone();
        self.push(yv, vec![x], move || {
            Box::new(move |g, _| {
                let gd = g.data();
                let yd = y_saved.data();
                let mut dx = vec![T::zero(); gd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * extent * inner + i;
                        let mut gsum = T::zero();
                        for e in 0..extent {
                            gsum += gd[base + e * inner];
                        }
                        for e in 0..extent {
                            let k = base + e * inner;
                            dx[k] = gd[k] - yd[k].exp() * gsum;
                        }
                    }
                }
                vec![Some(Array::from_vec(y_saved.shape(), dx))]
            })
        })
    }

    /// softmax(x) along `axis` (exp of the stable log-softmax).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Var {
        let lsm = self.log_softmax(x, axis);
        self.exp(lsm)
    }
}
