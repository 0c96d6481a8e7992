use deco_mamba_core::*;
use deco_mamba_core::ssm::scan::scan_forward_arrays;
use deco_mamba_core::ssm::params::SsmParams;
use deco_mamba_core::ssm::ss2d::{ss2d, MergeMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (b, l, c, n) = (8usize, 2304usize, 32usize, 16usize);
    let mut arr = |shape: &[usize], lo: f32, hi: f32| -> Array<f32> {
        let cnt: usize = shape.iter().product();
        Array::from_vec(shape, (0..cnt).map(|_| rng.gen_range(lo..hi)).collect())
    };
    let x = arr(&[b, l, c], -1.0, 1.0);
    let delta = arr(&[b, l, c], 0.01, 0.2);
    let a = arr(&[c, n], -2.0, -0.1);
    let bm = arr(&[b, l, n], -1.0, 1.0);
    let cm = arr(&[b, l, n], -1.0, 1.0);
    let d = arr(&[c], -1.0, 1.0);
    // raw scan kernel: one direction equivalent
    let t0 = Instant::now();
    for _ in 0..4 { let _ = scan_forward_arrays(&x, &delta, &a, &bm, &cm, &d); }
    println!("raw scan fwd [8,2304,32]x16 (1 dir): {:.1} ms", t0.elapsed().as_secs_f64()*250.0);

    // graph scan with backward
    let t0 = Instant::now();
    for _ in 0..4 {
        let mut g = Graph::<f32>::new();
        let xv = g.leaf(x.clone(), true);
        let dv = g.leaf(delta.clone(), true);
        let av = g.leaf(a.clone(), true);
        let bv = g.leaf(bm.clone(), true);
        let cv = g.leaf(cm.clone(), true);
        let sv = g.leaf(d.clone(), true);
        let y = g.selective_scan(xv, dv, av, bv, cv, sv);
        let loss = g.sum_all(y);
        g.backward(loss);
    }
    println!("graph scan fwd+bwd (1 dir):          {:.1} ms", t0.elapsed().as_secs_f64()*250.0);

    // full ss2d via params (4 dirs + projections + permutes)
    let mut store = ParamStore::<f32>::new();
    let mut rp = ChaCha8Rng::seed_from_u64(1);
    let params = SsmParams::new(&mut store, &mut rp, "ssm", c, n, 4);
    let xmap = arr(&[b, c, 48, 48], -1.0, 1.0);
    let t0 = Instant::now();
    for _ in 0..4 {
        let mut g = Graph::<f32>::new();
        let xv = g.leaf(xmap.clone(), true);
        let y = ss2d(&mut g, &store, &params, xv, MergeMode::Sum);
        let loss = g.sum_all(y);
        g.backward(loss);
    }
    println!("ss2d fwd+bwd (4 dirs, projections):  {:.1} ms", t0.elapsed().as_secs_f64()*250.0);

    // ss2d forward only
    let t0 = Instant::now();
    for _ in 0..4 {
        let mut g = Graph::<f32>::inference();
        let xv = g.leaf(xmap.clone(), false);
        let _ = ss2d(&mut g, &store, &params, xv, MergeMode::Sum);
    }
    println!("ss2d fwd only:                       {:.1} ms", t0.elapsed().as_secs_f64()*250.0);
}
