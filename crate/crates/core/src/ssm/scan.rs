//! Linear-time selective scan.
//!
//! Recurrence per position t, channel c, state n:
//!
//!   Abar = exp(delta[t,c] * A[c,n])          (zero-order hold on A)
//!   Bbar = delta[t,c] * B[t,n]               (Euler on B)
//!   h[c,n] <- Abar * h[c,n] + Bbar * x[t,c]
//!   y[t,c]  = sum_n C[t,n] * h[c,n] + D[c] * x[t,c]
//!
//! One O(L*C*N) pass. The backward pass is the reverse recurrence; states
//! are not stored for every step but recomputed per chunk from sqrt(L)
//! checkpoints saved during the forward pass.

use crate::array::{Array, Scalar};
use crate::graph::{Graph, Var};
use rayon::prelude::*;

/// Materialized discretization: Abar = exp(delta x A), Bbar = delta x B,
/// both [L,C,N]. Used by the reference scan and the discretization tests;
/// the fused scan computes the same quantities on the fly.
pub fn discretize<T: Scalar>(
    delta: &Array<T>,
    a: &Array<T>,
    b: &Array<T>,
) -> (Array<T>, Array<T>) {
    let (l, c) = (delta.shape()[0], delta.shape()[1]);
    let n = a.shape()[1];
    assert_eq!(a.shape()[0], c, "discretize: A channels");
    assert_eq!(b.shape(), &[l, n], "discretize: B shape");
    assert!(
        delta.data().iter().all(|&d| d > T::zero()),
        "discretize: delta must be positive"
    );
    let mut abar = vec![T::zero(); l * c * n];
    let mut bbar = vec![T::zero(); l * c * n];
    for t in 0..l {
        for ch in 0..c {
            let dt = delta.data()[t * c + ch];
            for s in 0..n {
                abar[(t * c + ch) * n + s] = (dt * a.data()[ch * n + s]).exp();
                bbar[(t * c + ch) * n + s] = dt * b.data()[t * n + s];
            }
        }
    }
    (Array::from_vec(&[l, c, n], abar), Array::from_vec(&[l, c, n], bbar))
}

fn checkpoint_interval(l: usize) -> usize {
    ((l as f64).sqrt().ceil() as usize).clamp(1, 256)
}

struct ScanDims {
    batch: usize,
    l: usize,
    c: usize,
    n: usize,
}

fn scan_dims(
    x: &[usize],
    delta: &[usize],
    a: &[usize],
    b: &[usize],
    c_mat: &[usize],
    d: &[usize],
) -> ScanDims {
    assert_eq!(x.len(), 3, "scan x must be [B,L,C]");
    let (batch, l, c) = (x[0], x[1], x[2]);
    assert!(l >= 1, "scan needs L >= 1");
    assert_eq!(delta, x, "scan delta must match x shape");
    assert_eq!(a.len(), 2, "scan A must be [C,N]");
    assert_eq!(a[0], c, "scan A channel dim");
    let n = a[1];
    assert_eq!(b, &[batch, l, n], "scan B must be [B,L,N]");
    assert_eq!(c_mat, &[batch, l, n], "scan C must be [B,L,N]");
    assert_eq!(d, &[c], "scan D must be [C]");
    ScanDims { batch, l, c, n }
}

/// Forward for one batch element. Writes y and (when `checkpoints` is
/// given) the entry state of every chunk.
#[allow(clippy::too_many_arguments)]
fn scan_forward_one<T: Scalar>(
    xd: &[T],
    dd: &[T],
    ad: &[T],
    bd: &[T],
    cd: &[T],
    skip: &[T],
    dims: (usize, usize, usize),
    ck: usize,
    y: &mut [T],
    mut checkpoints: Option<&mut [T]>,
) {
    let (l, c, n) = dims;
    let mut h = vec![T::zero(); c * n];
    let mut abar = vec![T::zero(); n];
    for t in 0..l {
        if let Some(cp) = checkpoints.as_deref_mut() {
            if t % ck == 0 {
                let j = t / ck;
                cp[j * c * n..(j + 1) * c * n].copy_from_slice(&h);
            }
        }
        let bt = &bd[t * n..(t + 1) * n];
        let ct = &cd[t * n..(t + 1) * n];
        for ch in 0..c {
            let dt = dd[t * c + ch];
            let xt = xd[t * c + ch];
            let arow = &ad[ch * n..(ch + 1) * n];
            let hrow = &mut h[ch * n..(ch + 1) * n];
            let dtx = dt * xt;
            for (a, &av) in abar.iter_mut().zip(arow) {
                *a = (dt * av).exp_fast();
            }
            for ((hv, &a), &bv) in hrow.iter_mut().zip(abar.iter()).zip(bt) {
                *hv = a * *hv + dtx * bv;
            }
            let mut acc = T::zero();
            for (&cv, &hv) in ct.iter().zip(hrow.iter()) {
                acc += cv * hv;
            }
            y[t * c + ch] = acc + skip[ch] * xt;
        }
    }
}

struct ScanGrads<T> {
    dx: Vec<T>,
    ddelta: Vec<T>,
    da: Vec<T>,
    db: Vec<T>,
    dc: Vec<T>,
    dd: Vec<T>,
}

/// Reverse recurrence for one batch element, recomputing states per chunk
/// from the saved checkpoints.
#[allow(clippy::too_many_arguments)]
fn scan_backward_one<T: Scalar>(
    gy: &[T],
    xd: &[T],
    dd: &[T],
    ad: &[T],
    bd: &[T],
    cd: &[T],
    skip: &[T],
    dims: (usize, usize, usize),
    ck: usize,
    checkpoints: &[T],
) -> ScanGrads<T> {
    let (l, c, n) = dims;
    let mut g = ScanGrads {
        dx: vec![T::zero(); l * c],
        ddelta: vec![T::zero(); l * c],
        da: vec![T::zero(); c * n],
        db: vec![T::zero(); l * n],
        dc: vec![T::zero(); l * n],
        dd: vec![T::zero(); c],
    };
    let mut dh = vec![T::zero(); c * n];
    let n_chunks = l.div_ceil(ck);
    // chunk state buffer: states[k] = h before step t0+k; states[len] = h after last
    let mut states = vec![T::zero(); (ck + 1) * c * n];
    let mut abars = vec![T::zero(); ck * c * n];
    for j in (0..n_chunks).rev() {
        let t0 = j * ck;
        let t1 = (t0 + ck).min(l);
        let span = t1 - t0;
        states[..c * n].copy_from_slice(&checkpoints[j * c * n..(j + 1) * c * n]);
        // recompute states and Abar within the chunk
        for k in 0..span {
            let t = t0 + k;
            let bt = &bd[t * n..(t + 1) * n];
            let (prev_all, next_all) = states.split_at_mut((k + 1) * c * n);
            let prev = &prev_all[k * c * n..];
            let next = &mut next_all[..c * n];
            let ab = &mut abars[k * c * n..(k + 1) * c * n];
            for ch in 0..c {
                let dt = dd[t * c + ch];
                let xt = xd[t * c + ch];
                let arow = &ad[ch * n..(ch + 1) * n];
                let dtx = dt * xt;
                let abrow = &mut ab[ch * n..(ch + 1) * n];
                for (a, &av) in abrow.iter_mut().zip(arow) {
                    *a = (dt * av).exp_fast();
                }
                let prow = &prev[ch * n..(ch + 1) * n];
                let nrow = &mut next[ch * n..(ch + 1) * n];
                for (((nv, &a), &pv), &bv) in
                    nrow.iter_mut().zip(abrow.iter()).zip(prow).zip(bt)
                {
                    *nv = a * pv + dtx * bv;
                }
            }
        }
        // reverse pass over the chunk
        for k in (0..span).rev() {
            let t = t0 + k;
            let bt = &bd[t * n..(t + 1) * n];
            let ct = &cd[t * n..(t + 1) * n];
            let h_prev = &states[k * c * n..(k + 1) * c * n];
            let h_cur = &states[(k + 1) * c * n..(k + 2) * c * n];
            let ab = &abars[k * c * n..(k + 1) * c * n];
            let db_t = &mut g.db[t * n..(t + 1) * n];
            let dc_t = &mut g.dc[t * n..(t + 1) * n];
            for ch in 0..c {
                let dt = dd[t * c + ch];
                let xt = xd[t * c + ch];
                let gyv = gy[t * c + ch];
                let arow = &ad[ch * n..(ch + 1) * n];
                let dhrow = &mut dh[ch * n..(ch + 1) * n];
                g.dd[ch] += gyv * xt;
                let mut dx_acc = skip[ch] * gyv;
                let mut ddt_acc = T::zero();
                for s in 0..n {
                    let idx = ch * n + s;
                    // C-readout contributions (uses h_t)
                    dc_t[s] += gyv * h_cur[idx];
                    let dhv = dhrow[s] + gyv * ct[s];
                    let hp = h_prev[idx];
                    let abar = ab[idx];
                    ddt_acc += dhv * (arow[s] * abar * hp + bt[s] * xt);
                    g.da[idx] += dhv * dt * abar * hp;
                    db_t[s] += dhv * dt * xt;
                    dx_acc += dhv * dt * bt[s];
                    dhrow[s] = dhv * abar;
                }
                g.dx[t * c + ch] = dx_acc;
                g.ddelta[t * c + ch] = ddt_acc;
            }
        }
    }
    g
}

impl<T: Scalar> Graph<T> {
    /// Batched selective scan. x, delta: [B,L,C]; a: [C,N] (negative for
    /// stability); b, c: [B,L,N]; d: [C]. Returns y: [B,L,C].
    pub fn selective_scan(
        &mut self,
        x: Var,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        d: Var,
    ) -> Var {
        let xv = self.value(x).clone();
        let dv = self.value(delta).clone();
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let cv = self.value(c).clone();
        let skipv = self.value(d).clone();
        let dims = scan_dims(
            xv.shape(),
            dv.shape(),
            av.shape(),
            bv.shape(),
            cv.shape(),
            skipv.shape(),
        );
        let (batch, l, ch, ns) = (dims.batch, dims.l, dims.c, dims.n);
        let ck = checkpoint_interval(l);
        let n_chunks = l.div_ceil(ck);
        let mut y = vec![T::zero(); batch * l * ch];
        let mut checkpoints = vec![T::zero(); batch * n_chunks * ch * ns];
        let need_ck = self.grad_enabled();
        {
            let xd = xv.data();
            let dd = dv.data();
            let ad = av.data();
            let bd = bv.data();
            let cd = cv.data();
            let sk = skipv.data();
            y.par_chunks_mut(l * ch)
                .zip(checkpoints.par_chunks_mut(n_chunks * ch * ns))
                .enumerate()
                .for_each(|(bi, (yb, cpb))| {
                    scan_forward_one(
                        &xd[bi * l * ch..(bi + 1) * l * ch],
                        &dd[bi * l * ch..(bi + 1) * l * ch],
                        ad,
                        &bd[bi * l * ns..(bi + 1) * l * ns],
                        &cd[bi * l * ns..(bi + 1) * l * ns],
                        sk,
                        (l, ch, ns),
                        ck,
                        yb,
                        need_ck.then_some(cpb),
                    );
                });
        }
        let out = Array::from_vec(&[batch, l, ch], y);
        self.push(out, vec![x, delta, a, b, c, d], move || {
            Box::new(move |gy, _needs| {
                let gyd = gy.data();
                let per_batch: Vec<ScanGrads<T>> = (0..batch)
                    .into_par_iter()
                    .map(|bi| {
                        scan_backward_one(
                            &gyd[bi * l * ch..(bi + 1) * l * ch],
                            &xv.data()[bi * l * ch..(bi + 1) * l * ch],
                            &dv.data()[bi * l * ch..(bi + 1) * l * ch],
                            av.data(),
                            &bv.data()[bi * l * ns..(bi + 1) * l * ns],
                            &cv.data()[bi * l * ns..(bi + 1) * l * ns],
                            skipv.data(),
                            (l, ch, ns),
                            ck,
                            &checkpoints[bi * n_chunks * ch * ns..(bi + 1) * n_chunks * ch * ns],
                        )
                    })
                    .collect();
                let mut dx = Vec::with_capacity(batch * l * ch);
                let mut ddelta = Vec::with_capacity(batch * l * ch);
                let mut db = Vec::with_capacity(batch * l * ns);
                let mut dc = Vec::with_capacity(batch * l * ns);
                let mut da = vec![T::zero(); ch * ns];
                let mut dd_skip = vec![T::zero(); ch];
                for gb in per_batch {
                    dx.extend_from_slice(&gb.dx);
                    ddelta.extend_from_slice(&gb.ddelta);
                    db.extend_from_slice(&gb.db);
                    dc.extend_from_slice(&gb.dc);
                    for (acc, v) in da.iter_mut().zip(gb.da) {
                        *acc += v;
                    }
                    for (acc, v) in dd_skip.iter_mut().zip(gb.dd) {
                        *acc += v;
                    }
                }
                vec![
                    Some(Array::from_vec(&[batch, l, ch], dx)),
                    Some(Array::from_vec(&[batch, l, ch], ddelta)),
                    Some(Array::from_vec(&[ch, ns], da)),
                    Some(Array::from_vec(&[batch, l, ns], db)),
                    Some(Array::from_vec(&[batch, l, ns], dc)),
                    Some(Array::from_vec(&[ch], dd_skip)),
                ]
            })
        })
    }
}

/// Plain forward scan on arrays (no tape), for timing and inference paths.
pub fn scan_forward_arrays<T: Scalar>(
    x: &Array<T>,
    delta: &Array<T>,
    a: &Array<T>,
    b: &Array<T>,
    c: &Array<T>,
    d: &Array<T>,
) -> Array<T> {
    let dims = scan_dims(x.shape(), delta.shape(), a.shape(), b.shape(), c.shape(), d.shape());
    let (batch, l, ch, ns) = (dims.batch, dims.l, dims.c, dims.n);
    let ck = checkpoint_interval(l);
    let mut y = vec![T::zero(); batch * l * ch];
    for bi in 0..batch {
        scan_forward_one(
            &x.data()[bi * l * ch..(bi + 1) * l * ch],
            &delta.data()[bi * l * ch..(bi + 1) * l * ch],
            a.data(),
            &b.data()[bi * l * ns..(bi + 1) * l * ns],
            &c.data()[bi * l * ns..(bi + 1) * l * ns],
            d.data(),
            (l, ch, ns),
            ck,
            &mut y[bi * l * ch..(bi + 1) * l * ch],
            None,
        );
    }
    Array::from_vec(&[batch, l, ch], y)
}
