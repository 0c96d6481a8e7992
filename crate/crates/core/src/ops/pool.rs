//! Spatial pooling. Max pooling routes its gradient to the first maximal
//! element of the window in row-major order.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

impl<T: Scalar> Graph<T> {
    pub fn pool2d(&mut self, x: Var, mode: PoolMode, kernel: usize, stride: usize) -> Var {
        let xv = self.value(x).clone();
        let s = xv.shape();
        assert_eq!(s.len(), 4, "pool2d input must be [B,C,H,W]");
        let (batch, c, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(kernel >= 1 && stride >= 1);
        assert!(kernel <= h && kernel <= w, "pool2d kernel exceeds spatial extent");
        let ho = (h - kernel) / stride + 1;
        let wo = (w - kernel) / stride + 1;
        let planes = batch * c;
        let xd = xv.data();
        let mut out = vec![T::zero(); planes * ho * wo];
        let mut argmax = vec![0usize; if mode == PoolMode::Max { planes * ho * wo } else { 0 }];
        let inv = T::one() / T::from_f64((kernel * kernel) as f64);
        for p in 0..planes {
            let xp = &xd[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let o = (p * ho + oy) * wo + ox;
                    match mode {
                        PoolMode::Max => {
                            let mut best = T::neg_infinity();
                            let mut arg = 0usize;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let i = (oy * stride + ky) * w + ox * stride + kx;
                                    if xp[i] > best {
                                        best = xp[i];
                                        arg = i;
                                    }
                                }
                            }
                            out[o] = best;
                            argmax[o] = p * h * w + arg;
                        }
                        PoolMode::Avg => {
                            let mut acc = T::zero();
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    acc += xp[(oy * stride + ky) * w + ox * stride + kx];
                                }
                            }
                            out[o] = acc * inv;
                        }
                    }
                }
            }
        }
        let out = Array::from_vec(&[batch, c, ho, wo], out);
        let in_shape = xv.shape().to_vec();
        self.push(out, vec![x], move || {
            Box::new(move |g, _| {
                let gd = g.data();
                let mut dx = vec![T::zero(); in_shape.iter().product()];
                match mode {
                    PoolMode::Max => {
                        for (o, &i) in argmax.iter().enumerate() {
                            dx[i] += gd[o];
                        }
                    }
                    PoolMode::Avg => {
                        for p in 0..planes {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let gv = gd[(p * ho + oy) * wo + ox] * inv;
                                    for ky in 0..kernel {
                                        for kx in 0..kernel {
                                            dx[p * h * w + (oy * stride + ky) * w + ox * stride + kx] += gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                vec![Some(Array::from_vec(&in_shape, dx))]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_and_avg_of_2x2() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]), false);
        let m = g.pool2d(x, PoolMode::Max, 2, 2);
        let a = g.pool2d(x, PoolMode::Avg, 2, 2);
        assert_eq!(g.value(m).data(), &[4.0]);
        assert_eq!(g.value(a).data(), &[2.5]);
    }

    #[test]
    fn max_tie_routes_to_first_row_major() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 2, 2], vec![4., 4., 0., 0.]), true);
        let m = g.pool2d(x, PoolMode::Max, 2, 2);
        g.backward(m);
        assert_eq!(g.grad(x).unwrap().data(), &[1., 0., 0., 0.]);
    }

    #[test]
    fn avg_backward_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Array::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]), true);
        let a = g.pool2d(x, PoolMode::Avg, 2, 2);
        g.backward(a);
        assert_eq!(g.grad(x).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn overlapping_stride_one_window() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(
            Array::from_vec(&[1, 1, 3, 3], (1..=9).map(|i| i as f64).collect()),
            false,
        );
        let m = g.pool2d(x, PoolMode::Max, 2, 1);
        assert_eq!(g.value(m).shape(), &[1, 1, 2, 2]);
        assert_eq!(g.value(m).data(), &[5., 6., 8., 9.]);
    }
}
