use deco_mamba_core::*;
use deco_mamba_core::nn::Mode;
use deco_mamba_core::nn::deform::{ConvKind, DeformableResidualBlock};
use deco_mamba_core::ssm::{Vssmb, MergeMode};
use deco_mamba_core::net::{Model, ModelConfig};
use deco_mamba_core::loss::{total_loss, LossConfig, Supervision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn desk() -> ModelConfig {
    ModelConfig {
        input_size: (96, 96), stem_channels: 8,
        encoder_widths: [16, 32, 48, 96], encoder_blocks: [2, 2, 2, 2],
        encoder_heads: [1, 2, 4, 8], encoder_sr_ratios: [8, 4, 1, 1],
        encoder_mlp_ratio: 2, decoder_widths: [96, 64, 48, 32, 16, 8],
        ..ModelConfig::desk(4, 1)
    }
}

fn time_block(name: &str, mut f: impl FnMut()) {
    let t0 = Instant::now();
    let reps = 3;
    for _ in 0..reps { f(); }
    println!("{name:<40} {:.1} ms", t0.elapsed().as_secs_f64()*1e3/reps as f64);
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    // vssmb at D2 scale: 16 ch at 48x48, batch 8
    let v16 = Vssmb::new(&mut store, &mut rng, "v16", 16, 16, MergeMode::Sum);
    let d16 = DeformableResidualBlock::new(&mut store, &mut rng, "d16", 16, 16, ConvKind::Deformable);
    let d8 = DeformableResidualBlock::new(&mut store, &mut rng, "d8", 8, 8, ConvKind::Deformable);
    let x48 = Array::<f32>::from_vec(&[8,16,48,48], (0..8*16*48*48).map(|i| (i%97) as f32/96.0-0.5).collect());
    let x96 = Array::<f32>::from_vec(&[8,8,96,96], (0..8*8*96*96).map(|i| (i%89) as f32/88.0-0.5).collect());

    time_block("vssmb 16ch@48x48 fwd+bwd", || {
        let mut g = Graph::new();
        let x = g.leaf(x48.clone(), true);
        let y = v16.forward(&mut g, &store, x);
        let l = g.sum_all(y);
        g.backward(l);
    });
    time_block("vssmb 16ch@48x48 fwd only", || {
        let mut g = Graph::inference();
        let x = g.leaf(x48.clone(), false);
        let _ = v16.forward(&mut g, &store, x);
    });
    time_block("drb 16ch@48x48 fwd+bwd", || {
        let mut store2 = store.clone();
        let mut g = Graph::new();
        let x = g.leaf(x48.clone(), true);
        let y = d16.forward(&mut g, &mut store2, x, Mode::Train);
        let l = g.sum_all(y);
        g.backward(l);
    });
    time_block("drb 8ch@96x96 fwd+bwd", || {
        let mut store2 = store.clone();
        let mut g = Graph::new();
        let x = g.leaf(x96.clone(), true);
        let y = d8.forward(&mut g, &mut store2, x, Mode::Train);
        let l = g.sum_all(y);
        g.backward(l);
    });

    let mut model = Model::<f32>::new(desk()).unwrap();
    let img = Array::<f32>::from_vec(&[8,1,96,96], (0..8*96*96).map(|i| (i%251) as f32/250.0).collect());
    let mask: Vec<u8> = (0..8*96*96).map(|i| ((i/7)%4) as u8).collect();
    let lcfg = LossConfig::new(Supervision::DiceMsda, 5);
    time_block("encoder fwd (train rec)", || {
        let mut g = Graph::new();
        let x = g.leaf(img.clone(), false);
        let _ = model.encoder_forward(&mut g, x, Mode::Train);
    });
    time_block("full step", || {
        let mut g = Graph::new();
        let x = g.leaf(img.clone(), false);
        let out = model.forward(&mut g, x, Mode::Train);
        let lo = total_loss(&mut g, out.logits, &out.aux, &mask, 8, 96, 96, 4, &lcfg);
        g.backward(lo.total);
    });
    time_block("loss only on fixed logits", || {
        let mut g = Graph::new();
        let logits = g.leaf(Array::<f32>::zeros(&[8,4,96,96]), true);
        let aux: Vec<Var> = [3usize,6,12,24,48].iter().map(|&s| g.leaf(Array::<f32>::zeros(&[8,4,s,s]), true)).collect();
        let lo = total_loss(&mut g, logits, &aux, &mask, 8, 96, 96, 4, &lcfg);
        g.backward(lo.total);
    });
}
