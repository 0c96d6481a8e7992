//! Registered gradient-check suite covering every differentiable primitive
//! and composite block, with fixed seeds and small shapes. Run by the
//! `gradcheck` command and by the acceptance tests.

use crate::array::Array;
use crate::gradcheck::{grad_check, grad_check_block, CheckReport, DEFAULT_EPS};

use crate::loss;
use crate::net::config::ModelConfig;
use crate::net::Model;
use crate::nn::deform::{ConvKind, DeformableResidualBlock};
use crate::nn::dist_head::DistributionHead;
use crate::nn::gates::{AttentionGate, ChannelAttention, CoAttentionGate};
use crate::nn::layers::{BatchNorm2d, LayerNorm2d};
use crate::nn::stem::CnnStem;
use crate::nn::Mode;
use crate::ops::pool::PoolMode;
use crate::param::ParamStore;
use crate::ssm::params::SsmParams;
use crate::ssm::{MergeMode, Vssmb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SuiteCheck {
    pub name: &'static str,
    pub run: fn() -> CheckReport,
}

fn rng_for(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xdec0_0000 + tag)
}

fn rand_arr(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Array<f64> {
    let n: usize = shape.iter().product();
    Array::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Random values bounded away from zero (for kinked ops like relu/max).
fn rand_offzero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array<f64> {
    let n: usize = shape.iter().product();
    Array::from_vec(
        shape,
        (0..n)
            .map(|_| {
                let v = rng.gen_range(0.2..1.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
}

fn check_elementwise() -> CheckReport {
    let mut r = rng_for(1);
    let a = rand_arr(&mut r, &[2, 3, 1], -1.0, 1.0);
    let b = rand_arr(&mut r, &[3, 4], 0.3, 1.5);
    grad_check(
        "elementwise add/mul/sub/div",
        &|g, v| {
            let prod = g.mul(v[0], v[1]);
            let quot = g.div(v[0], v[1]);
            let s = g.add(prod, quot);
            g.sub(s, v[0])
        },
        &[a, b],
        DEFAULT_EPS,
        1e-7,
        None,
    )
}

fn check_activations() -> CheckReport {
    let mut r = rng_for(2);
    let x = rand_offzero(&mut r, &[3, 5]);
    grad_check(
        "exp/log/sqrt/sigmoid/silu/softplus/relu",
        &|g, v| {
            let e = g.exp(v[0]);
            let l = g.log(e);
            let sq = g.mul(l, l);
            let pos = g.add_scalar(sq, 0.5);
            let rt = g.sqrt(pos);
            let sg = g.sigmoid(rt);
            let si = g.silu(sg);
            let sp = g.softplus(si);
            let re = g.relu(v[0]);
            g.add(sp, re)
        },
        &[x],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_powf_clamp() -> CheckReport {
    let mut r = rng_for(3);
    let x = rand_arr(&mut r, &[8], 0.3, 2.0);
    grad_check(
        "powf/clamp_min/scale",
        &|g, v| {
            let p = g.powf(v[0], 1.7);
            let c = g.clamp_min(p, 0.8);
            g.scale(c, 0.3)
        },
        &[x],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_matmul() -> CheckReport {
    let mut r = rng_for(4);
    let a = rand_arr(&mut r, &[3, 4], -1.0, 1.0);
    let b = rand_arr(&mut r, &[4, 2], -1.0, 1.0);
    grad_check("matmul", &|g, v| g.matmul(v[0], v[1]), &[a, b], DEFAULT_EPS, 1e-7, None)
}

fn check_bmm() -> CheckReport {
    let mut r = rng_for(5);
    let a = rand_arr(&mut r, &[2, 3, 4], -1.0, 1.0);
    let b = rand_arr(&mut r, &[2, 4, 2], -1.0, 1.0);
    grad_check("bmm", &|g, v| g.bmm(v[0], v[1]), &[a, b], DEFAULT_EPS, 1e-7, None)
}

fn check_reduces() -> CheckReport {
    let mut r = rng_for(6);
    let x = rand_offzero(&mut r, &[2, 3, 4]);
    grad_check(
        "reduce sum/mean/max",
        &|g, v| {
            let s = g.reduce_sum(v[0], &[2], false);
            let m = g.reduce_mean(v[0], &[0], true);
            let mx = g.reduce_max(v[0], &[1], false);
            let ms = g.sum_all(m);
            let s2 = g.sum_all(s);
            let m2 = g.sum_all(mx);
            let t = g.add(s2, ms);
            g.add(t, m2)
        },
        &[x],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_shape_ops() -> CheckReport {
    let mut r = rng_for(7);
    let x = rand_arr(&mut r, &[2, 3, 4], -1.0, 1.0);
    let y = rand_arr(&mut r, &[2, 2, 4], -1.0, 1.0);
    grad_check(
        "permute/narrow/concat/flip/reshape",
        &|g, v| {
            let p = g.permute(v[0], &[1, 0, 2]);
            let p = g.permute(p, &[1, 0, 2]);
            let n = g.narrow(p, 1, 1, 2);
            let c = g.concat(&[n, v[1]], 1);
            let f = g.flip(c, 2);
            g.reshape(f, &[2, 4, 2, 2])
        },
        &[x, y],
        DEFAULT_EPS,
        1e-7,
        None,
    )
}

fn check_log_softmax() -> CheckReport {
    let mut r = rng_for(8);
    let x = rand_arr(&mut r, &[2, 4, 3], -3.0, 3.0);
    grad_check(
        "log_softmax",
        &|g, v| {
            let lsm = g.log_softmax(v[0], 1);
            g.mul(lsm, lsm)
        },
        &[x],
        DEFAULT_EPS,
        1e-7,
        None,
    )
}

fn check_conv2d() -> CheckReport {
    let mut r = rng_for(9);
    let x = rand_arr(&mut r, &[2, 3, 6, 6], -1.0, 1.0);
    let w = rand_arr(&mut r, &[4, 3, 3, 3], -0.5, 0.5);
    let b = rand_arr(&mut r, &[4], -0.5, 0.5);
    grad_check(
        "conv2d (stride 1 and 2)",
        &|g, v| {
            let y1 = g.conv2d(v[0], v[1], v[2], 1, 1);
            let y2 = g.conv2d(v[0], v[1], v[2], 2, 1);
            let s2 = g.sum_all(y2);
            let s1 = g.sum_all(y1);
            g.add(s1, s2)
        },
        &[x, w, b],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_depthwise() -> CheckReport {
    let mut r = rng_for(10);
    let x = rand_arr(&mut r, &[2, 3, 5, 5], -1.0, 1.0);
    let w = rand_arr(&mut r, &[3, 1, 3, 3], -0.5, 0.5);
    let b = rand_arr(&mut r, &[3], -0.5, 0.5);
    grad_check(
        "depthwise_conv2d",
        &|g, v| g.depthwise_conv2d(v[0], v[1], v[2]),
        &[x, w, b],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_pools() -> CheckReport {
    let mut r = rng_for(11);
    let x = rand_offzero(&mut r, &[2, 2, 6, 6]);
    grad_check(
        "pool2d max/avg + adaptive",
        &|g, v| {
            let mx = g.pool2d(v[0], PoolMode::Max, 2, 2);
            let av = g.pool2d(v[0], PoolMode::Avg, 3, 1);
            let am = g.adaptive_pool_11(v[0], true);
            let aa = g.adaptive_pool_11(v[0], false);
            let s1 = g.sum_all(mx);
            let s2 = g.sum_all(av);
            let s3 = g.sum_all(am);
            let s4 = g.sum_all(aa);
            let t1 = g.add(s1, s2);
            let t2 = g.add(s3, s4);
            g.add(t1, t2)
        },
        &[x],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_bilinear() -> CheckReport {
    let mut r = rng_for(12);
    let x = rand_arr(&mut r, &[2, 2, 4, 4], -1.0, 1.0);
    grad_check(
        "bilinear_resize x2",
        &|g, v| {
            let up = g.upsample_x2(v[0]);
            g.mul(up, up)
        },
        &[x],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_grid_sample() -> CheckReport {
    let mut r = rng_for(13);
    let x = rand_arr(&mut r, &[2, 2, 5, 5], -1.0, 1.0);
    // coordinates strictly off the integer lattice and a couple far outside
    let mut coords = Vec::new();
    for _ in 0..2 * 3 * 2 * 2 {
        coords.push(r.gen_range(0..4) as f64 + r.gen_range(0.25..0.75));
        coords.push(r.gen_range(0..4) as f64 + r.gen_range(0.25..0.75));
    }
    coords[0] = -7.3;
    coords[1] = -5.9;
    let c = Array::from_vec(&[2, 3, 2, 2, 2], coords);
    grad_check(
        "grid_sample_bilinear",
        &|g, v| {
            let s = g.grid_sample_bilinear(v[0], v[1]);
            g.mul(s, s)
        },
        &[x, c],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_scan_core() -> CheckReport {
    let mut r = rng_for(14);
    let (b, l, c, n) = (2usize, 9usize, 3usize, 4usize);
    let x = rand_arr(&mut r, &[b, l, c], -1.0, 1.0);
    let delta = rand_arr(&mut r, &[b, l, c], 0.02, 0.4);
    let a = rand_arr(&mut r, &[c, n], -2.0, -0.2);
    let bm = rand_arr(&mut r, &[b, l, n], -1.0, 1.0);
    let cm = rand_arr(&mut r, &[b, l, n], -1.0, 1.0);
    let d = rand_arr(&mut r, &[c], -1.0, 1.0);
    grad_check(
        "selective_scan core (all six inputs)",
        &|g, v| g.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5]),
        &[x, delta, a, bm, cm, d],
        DEFAULT_EPS,
        1e-5,
        None,
    )
}

fn check_batch_norm() -> CheckReport {
    let mut r = rng_for(15);
    let x = rand_arr(&mut r, &[2, 3, 4, 4], -1.5, 1.5);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 3);
    let mut r2 = rng_for(151);
    store.set_value(bn.gamma, rand_arr(&mut r2, &[3], 0.5, 1.5));
    store.set_value(bn.beta, rand_arr(&mut r2, &[3], -0.5, 0.5));
    grad_check_block(
        "batch_norm (train mode)",
        &move |g, st, v| bn.forward(g, st, v[0], Mode::Train),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-5,
        None,
    )
}

fn check_layer_norm() -> CheckReport {
    let mut r = rng_for(16);
    let x = rand_arr(&mut r, &[2, 4, 3, 3], -1.5, 1.5);
    let mut store = ParamStore::<f64>::new();
    let ln = LayerNorm2d::new(&mut store, "ln", 4);
    let mut r2 = rng_for(161);
    store.set_value(ln.gamma, rand_arr(&mut r2, &[4], 0.5, 1.5));
    grad_check_block(
        "layer_norm (per position)",
        &move |g, st, v| ln.forward(g, st, v[0]),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-5,
        None,
    )
}

fn check_stem() -> CheckReport {
    let mut r = rng_for(17);
    let x = rand_arr(&mut r, &[1, 1, 8, 8], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(171);
    let stem = CnnStem::new(&mut store, &mut rp, "stem", 1, 3);
    grad_check_block(
        "cnn_stem",
        &move |g, st, v| {
            let (x1, x2) = stem.forward(g, st, v[0], Mode::Train);
            let s1 = g.sum_all(x1);
            let s2 = g.sum_all(x2);
            g.add(s1, s2)
        },
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(48),
    )
}

fn check_attention_gate() -> CheckReport {
    let mut r = rng_for(18);
    let x = rand_arr(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    let gate = rand_arr(&mut r, &[2, 4, 4, 4], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(181);
    let ag = AttentionGate::new(&mut store, &mut rp, "ag", 3, 4);
    grad_check_block(
        "attention_gate (x and g paths)",
        &move |g, st, v| ag.forward(g, st, v[0], v[1]).gated,
        &[x, gate],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        None,
    )
}

fn check_channel_attention() -> CheckReport {
    let mut r = rng_for(19);
    let x = rand_offzero(&mut r, &[2, 4, 3, 3]);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(191);
    let ca = ChannelAttention::new(&mut store, &mut rp, "ca", 4, 2);
    grad_check_block(
        "channel_attention",
        &move |g, st, v| ca.forward(g, st, v[0]),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        None,
    )
}

fn check_cag() -> CheckReport {
    let mut r = rng_for(20);
    let skip = rand_arr(&mut r, &[1, 3, 4, 4], -1.0, 1.0);
    let dec = rand_arr(&mut r, &[1, 4, 4, 4], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(201);
    let cag = CoAttentionGate::new(&mut store, &mut rp, "cag", 3, 4, 4);
    grad_check_block(
        "co_attention_gate",
        &move |g, st, v| cag.forward(g, st, v[0], v[1]),
        &[skip, dec],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(64),
    )
}

fn check_deform_conv() -> CheckReport {
    let mut r = rng_for(21);
    let x = rand_arr(&mut r, &[1, 2, 5, 5], -1.0, 1.0);
    let w = rand_arr(&mut r, &[3, 2, 3, 3], -0.5, 0.5);
    let b = rand_arr(&mut r, &[3], -0.3, 0.3);
    // offsets off the integer lattice so the bilinear kernel is smooth at
    // the probe points
    let off = rand_arr(&mut r, &[1, 18, 5, 5], 0.15, 0.45);
    let mask = rand_arr(&mut r, &[1, 9, 5, 5], -1.0, 1.0);
    grad_check(
        "deformable_conv2d (incl. offsets)",
        &|g, v| g.deformable_conv2d(v[0], v[1], v[2], v[3], v[4]),
        &[x, w, b, off, mask],
        DEFAULT_EPS,
        1e-4,
        Some(96),
    )
}

fn check_drb() -> CheckReport {
    let mut r = rng_for(22);
    let x = rand_arr(&mut r, &[1, 3, 5, 5], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(221);
    let drb = DeformableResidualBlock::new(&mut store, &mut rp, "drb", 3, 4, ConvKind::Deformable);
    // nudge the zero-initialized offset branch off the integer lattice so
    // the sampled locations are smooth points of the interpolant
    let off_bias = drb.offset_conv.as_ref().unwrap().b;
    store.set_value(off_bias, Array::full(&[18], 0.3));
    let mask_bias = drb.mask_conv.as_ref().unwrap().b;
    store.set_value(mask_bias, Array::full(&[9], 0.2));
    grad_check_block(
        "deformable_residual_block",
        &move |g, st, v| drb.forward(g, st, v[0], Mode::Train),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(40),
    )
}

fn check_dist_head() -> CheckReport {
    let mut r = rng_for(23);
    let x = rand_arr(&mut r, &[2, 4, 3, 3], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(231);
    let head = DistributionHead::new(&mut store, &mut rp, "head", 4, 3);
    grad_check_block(
        "distribution_head",
        &move |g, st, v| head.forward(g, st, v[0], Mode::Train),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        None,
    )
}

fn check_ssm_sequence() -> CheckReport {
    let mut r = rng_for(24);
    let x = rand_arr(&mut r, &[1, 6, 4], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(241);
    let params = SsmParams::new(&mut store, &mut rp, "ssm", 4, 3, 1);
    grad_check_block(
        "ssm projections + scan",
        &move |g, st, v| params.scan_sequence(g, st, 0, v[0]),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        None,
    )
}

fn check_vssmb() -> CheckReport {
    let mut r = rng_for(25);
    let x = rand_arr(&mut r, &[1, 4, 4, 4], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(251);
    let block = Vssmb::new(&mut store, &mut rp, "vssmb", 4, 4, MergeMode::Sum);
    grad_check_block(
        "vssmb",
        &move |g, st, v| block.forward(g, st, v[0]),
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(24),
    )
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        input_size: (32, 32),
        stem_channels: 4,
        encoder_widths: [4, 8, 8, 8],
        encoder_blocks: [1, 1, 1, 1],
        encoder_heads: [1, 2, 2, 2],
        encoder_sr_ratios: [2, 2, 1, 1],
        encoder_mlp_ratio: 2,
        decoder_widths: [8, 8, 8, 8, 8, 8],
        ssm_state: 4,
        ..ModelConfig::desk(3, 1)
    }
}

fn check_encoder() -> CheckReport {
    let mut r = rng_for(26);
    let x = rand_arr(&mut r, &[1, 1, 32, 32], 0.0, 1.0);
    let model = Model::<f64>::new(tiny_model_config()).unwrap();
    let store = model.store.clone();
    let encoder = model.encoder;
    grad_check_block(
        "encoder (tiny, sampled)",
        &move |g, st, v| {
            let pyr = encoder.forward(g, st, v[0], Mode::Train);
            let s6 = g.sum_all(pyr.x6);
            let s1 = g.sum_all(pyr.x1);
            g.add(s6, s1)
        },
        &[x],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(3),
    )
}

fn check_decoder_stage() -> CheckReport {
    let mut r = rng_for(27);
    let skip = rand_arr(&mut r, &[1, 3, 8, 8], -1.0, 1.0);
    let dec = rand_arr(&mut r, &[1, 4, 8, 8], -1.0, 1.0);
    let mut store = ParamStore::<f64>::new();
    let mut rp = rng_for(271);
    let cag = CoAttentionGate::new(&mut store, &mut rp, "s.gate", 3, 4, 4);
    let vssmb = Vssmb::new(&mut store, &mut rp, "s.vssmb", 4, 4, MergeMode::Sum);
    let drb = DeformableResidualBlock::new(&mut store, &mut rp, "s.drb", 4, 4, ConvKind::Deformable);
    let ob = drb.offset_conv.as_ref().unwrap().b;
    store.set_value(ob, Array::full(&[18], 0.25));
    grad_check_block(
        "decoder stage (gate+vssmb+drb, sampled)",
        &move |g, st, v| {
            let fused = cag.forward(g, st, v[0], v[1]);
            let ctx = vssmb.forward(g, st, fused);
            drb.forward(g, st, ctx, Mode::Train)
        },
        &[skip, dec],
        &store,
        None,
        DEFAULT_EPS,
        1e-4,
        Some(4),
    )
}

fn check_dice_loss() -> CheckReport {
    let mut r = rng_for(28);
    let logits = rand_arr(&mut r, &[1, 3, 4, 4], -2.0, 2.0);
    let mask: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
    grad_check(
        "dice_loss (w.r.t. logits)",
        &move |g, v| {
            let probs = g.softmax(v[0], 1);
            let gt = g.constant(loss::one_hot::<f64>(&mask, 1, 4, 4, 3));
            loss::dice_loss(g, probs, gt, loss::DICE_EPS)
        },
        &[logits],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_dist_loss() -> CheckReport {
    let mut r = rng_for(29);
    let logits = rand_arr(&mut r, &[1, 3, 2, 2], -2.0, 2.0);
    let mask: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
    grad_check(
        "dist_loss_scale (KL + boundary weight)",
        &move |g, v| {
            let p = loss::windowed_gt_distribution::<f64>(&mask, 1, 4, 4, 3, 2, 2);
            loss::dist_loss_scale(g, &p, v[0], 1.0).0
        },
        &[logits],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_msda() -> CheckReport {
    let mut r = rng_for(30);
    let aux1 = rand_arr(&mut r, &[1, 2, 2, 2], -2.0, 2.0);
    let aux2 = rand_arr(&mut r, &[1, 2, 4, 4], -2.0, 2.0);
    let mask: Vec<u8> = (0..64).map(|i| ((i / 5) % 2) as u8).collect();
    grad_check(
        "msda_loss (two scales)",
        &move |g, v| {
            loss::msda_loss(g, &[v[0], v[1]], &mask, 1, 8, 8, 2, &[0.4, 0.6], 1.0, false).0
        },
        &[aux1, aux2],
        DEFAULT_EPS,
        1e-6,
        None,
    )
}

fn check_total_loss_modes() -> CheckReport {
    let mut r = rng_for(31);
    let logits = rand_arr(&mut r, &[1, 2, 8, 8], -2.0, 2.0);
    let mask: Vec<u8> = (0..64).map(|i| ((i / 3) % 2) as u8).collect();
    let aux_shapes = [1usize, 2, 4];
    let auxes: Vec<Array<f64>> =
        aux_shapes.iter().map(|&hs| rand_arr(&mut r, &[1, 2, hs, hs], -2.0, 2.0)).collect();
    let inputs: Vec<Array<f64>> = std::iter::once(logits).chain(auxes).collect();
    grad_check(
        "total objective (dice + msda + deepsup)",
        &move |g, v| {
            let probs = g.softmax(v[0], 1);
            let gt = g.constant(loss::one_hot::<f64>(&mask, 1, 8, 8, 2));
            let dice = loss::dice_loss(g, probs, gt, loss::DICE_EPS);
            let (msda, _, _) = loss::msda_loss(
                g,
                &v[1..],
                &mask,
                1,
                8,
                8,
                2,
                &[0.2, 0.3, 0.5],
                1.0,
                false,
            );
            let upsampled = g.bilinear_resize(v[1], 8, 8);
            let lsm = g.log_softmax(upsampled, 1);
            let oh = g.constant(loss::one_hot::<f64>(&mask, 1, 8, 8, 2));
            let picked = g.mul(oh, lsm);
            let ce_sum = g.sum_all(picked);
            let ce = g.scale(ce_sum, -1.0 / 64.0);
            let t = g.add(dice, msda);
            g.add(t, ce)
        },
        &inputs,
        DEFAULT_EPS,
        1e-5,
        None,
    )
}

/// Every registered check, in execution order.
pub fn registry() -> Vec<SuiteCheck> {
    vec![
        SuiteCheck { name: "elementwise", run: check_elementwise },
        SuiteCheck { name: "activations", run: check_activations },
        SuiteCheck { name: "powf_clamp", run: check_powf_clamp },
        SuiteCheck { name: "matmul", run: check_matmul },
        SuiteCheck { name: "bmm", run: check_bmm },
        SuiteCheck { name: "reduces", run: check_reduces },
        SuiteCheck { name: "shape_ops", run: check_shape_ops },
        SuiteCheck { name: "log_softmax", run: check_log_softmax },
        SuiteCheck { name: "conv2d", run: check_conv2d },
        SuiteCheck { name: "depthwise_conv2d", run: check_depthwise },
        SuiteCheck { name: "pools", run: check_pools },
        SuiteCheck { name: "bilinear_resize", run: check_bilinear },
        SuiteCheck { name: "grid_sample", run: check_grid_sample },
        SuiteCheck { name: "selective_scan_core", run: check_scan_core },
        SuiteCheck { name: "batch_norm", run: check_batch_norm },
        SuiteCheck { name: "layer_norm", run: check_layer_norm },
        SuiteCheck { name: "cnn_stem", run: check_stem },
        SuiteCheck { name: "attention_gate", run: check_attention_gate },
        SuiteCheck { name: "channel_attention", run: check_channel_attention },
        SuiteCheck { name: "co_attention_gate", run: check_cag },
        SuiteCheck { name: "deformable_conv2d", run: check_deform_conv },
        SuiteCheck { name: "deformable_residual_block", run: check_drb },
        SuiteCheck { name: "distribution_head", run: check_dist_head },
        SuiteCheck { name: "ssm_sequence", run: check_ssm_sequence },
        SuiteCheck { name: "vssmb", run: check_vssmb },
        SuiteCheck { name: "encoder_tiny", run: check_encoder },
        SuiteCheck { name: "decoder_stage", run: check_decoder_stage },
        SuiteCheck { name: "dice_loss", run: check_dice_loss },
        SuiteCheck { name: "dist_loss_scale", run: check_dist_loss },
        SuiteCheck { name: "msda_loss", run: check_msda },
        SuiteCheck { name: "total_objective", run: check_total_loss_modes },
    ]
}

/// Run every check, returning the reports in registry order.
pub fn run_all() -> Vec<CheckReport> {
    registry().iter().map(|c| (c.run)()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // The full suite runs in the acceptance tests; here we spot-check a
    // fast subset so unit runs stay quick.
    #[test]
    fn fast_subset_passes() {
        for check in registry().into_iter().take(13) {
            let report = (check.run)();
            assert!(report.passed(), "{}: {:?}", check.name, report);
        }
    }
}
