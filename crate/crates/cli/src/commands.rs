//! Subcommand implementations shared by the binary and the tests.

use crate::checkpoint::{config_diff, Checkpoint};
use crate::dataset_dir;
use crate::pnm;
use crate::train::{train, TrainConfig};
use anyhow::{bail, Context, Result};
use deco_mamba_core::data::synth::{synth_generate, SynthSpec};
use deco_mamba_core::data::SegSample;
use deco_mamba_core::net::complexity::{count_flops, count_params, macs_to_gmac};
use deco_mamba_core::net::{Model, ModelConfig};
use deco_mamba_core::ssm::scan::scan_forward_arrays;
use deco_mamba_core::suite;
use deco_mamba_core::Array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn cmd_train(config_path: &Path) -> Result<()> {
    let cfg = TrainConfig::from_file(config_path)?;
    let outcome = train(&cfg, true)?;
    println!(
        "done: best val dice {:.4} at epoch {} ({} epochs total)",
        outcome.best_val_dice,
        outcome.best_epoch,
        cfg.epochs
    );
    println!("final checkpoint: {}", outcome.final_ckpt.display());
    println!("best checkpoint:  {}", outcome.best_ckpt.display());
    Ok(())
}

pub fn cmd_eval(
    ckpt_path: &Path,
    data_dir: &Path,
    split: &str,
    batch: usize,
    out: Option<&Path>,
) -> Result<()> {
    let ck = Checkpoint::load(ckpt_path)?;
    let mut model = ck.build_model()?;
    let dataset = dataset_dir::load_dataset(data_dir, Some(split))?;
    if dataset.num_classes != model.config.num_classes {
        bail!(
            "dataset has {} classes, checkpoint model expects {}",
            dataset.num_classes,
            model.config.num_classes
        );
    }
    let report = model.evaluate(&dataset, batch);
    let mut text = String::new();
    for line in report.log_lines() {
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    let out_path = out
        .map(PathBuf::from)
        .unwrap_or_else(|| ckpt_path.with_extension("eval.txt"));
    fs::write(&out_path, text)?;
    println!("report written to {}", out_path.display());
    Ok(())
}

/// Compare a checkpoint's embedded configuration against one loaded from a
/// file, producing the field-level diff used in error messages.
pub fn check_config_compat(ck: &Checkpoint, requested: &ModelConfig) -> Result<()> {
    let embedded = ck.config()?;
    if &embedded != requested {
        let diffs = config_diff(&embedded, requested);
        bail!("checkpoint/config mismatch:\n  {}", diffs.join("\n  "));
    }
    Ok(())
}

pub fn cmd_gradcheck() -> Result<()> {
    let mut failed = 0usize;
    for check in suite::registry() {
        let report = (check.run)();
        println!("{}", report.table_line());
        if !report.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} gradient checks failed");
    }
    println!("all gradient checks passed");
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Median wall time of a forward scan at the given length.
pub fn scan_time_at(l: usize, c: usize, n: usize, runs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(l as u64);
    let mut arr = |shape: &[usize], lo: f64, hi: f64| -> Array<f32> {
        let count: usize = shape.iter().product();
        Array::from_vec(shape, (0..count).map(|_| rng.gen_range(lo..hi) as f32).collect())
    };
    let x = arr(&[1, l, c], -1.0, 1.0);
    let delta = arr(&[1, l, c], 0.01, 0.2);
    let a = arr(&[c, n], -2.0, -0.1);
    let b = arr(&[1, l, n], -1.0, 1.0);
    let cm = arr(&[1, l, n], -1.0, 1.0);
    let d = arr(&[c], -1.0, 1.0);
    // warm up
    let _ = scan_forward_arrays(&x, &delta, &a, &b, &cm, &d);
    let times: Vec<f64> = (0..runs)
        .map(|_| {
            let t0 = Instant::now();
            let y = scan_forward_arrays(&x, &delta, &a, &b, &cm, &d);
            let dt = t0.elapsed().as_secs_f64();
            assert!(y.data()[0].is_finite());
            dt
        })
        .collect();
    median(times)
}

pub fn cmd_bench() -> Result<()> {
    println!("selective_scan_1d forward (C=32, N=16, median of 5):");
    let mut times = Vec::new();
    for &l in &[1024usize, 2048, 4096, 8192] {
        let t = scan_time_at(l, 32, 16, 5);
        println!("  L={l:<6} {:.3} ms", t * 1e3);
        times.push((l, t));
    }
    for pair in times.windows(2) {
        let (l0, t0) = pair[0];
        let (l1, t1) = pair[1];
        println!("  time(L={l1})/time(L={l0}) = {:.2}", t1 / t0);
    }

    for (name, cfg) in [("v0", ModelConfig::v0(9, 1)), ("v1", ModelConfig::v1(9, 1))] {
        let params = count_params(&cfg);
        let macs = count_flops(&cfg);
        println!(
            "{name}: params={params} ({:.2} M), forward MACs={macs} ({:.2} GMac) at {}x{}",
            params as f64 / 1e6,
            macs_to_gmac(macs),
            cfg.input_size.0,
            cfg.input_size.1
        );
    }
    println!(
        "published reference configurations for context (pretrained hierarchies, not rebuilt \
         here): v0 9.67 M / 9.73 GMac, v1 46.93 M / 17.24 GMac"
    );

    // forward timing at 224^2 with the v0 preset
    let cfg = ModelConfig::v0(9, 1);
    let mut model = Model::<f32>::new(cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    let image = Array::<f32>::zeros(&[1, 1, 224, 224]);
    let t0 = Instant::now();
    let mut g = deco_mamba_core::Graph::inference();
    let x = g.leaf(image, false);
    let _ = model.forward(&mut g, x, deco_mamba_core::nn::Mode::Eval);
    println!("v0 forward at 224x224 (batch 1, eval): {:.2} s", t0.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub channels: usize,
    pub noise: f64,
    pub val_fraction: f64,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        count: args.count,
        h: args.height,
        w: args.width,
        num_classes: args.classes,
        channels: args.channels,
        noise: args.noise,
    };
    let ds = synth_generate(&spec, args.seed);
    let n_val = ((args.count as f64) * args.val_fraction).round() as usize;
    let n_train = args.count - n_val;
    let splits: Vec<(String, String)> = ds
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (s.id.clone(), if i < n_train { "train" } else { "val" }.to_string())
        })
        .collect();
    dataset_dir::write_dataset(&args.out, &ds, &splits)?;
    println!(
        "wrote {} samples ({} train / {} val, {} classes, {}x{}) to {}",
        args.count,
        n_train,
        n_val,
        args.classes,
        args.height,
        args.width,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_predict(
    ckpt_path: &Path,
    image_path: &Path,
    out_path: &Path,
    probs_path: Option<&Path>,
    allow_resize: bool,
) -> Result<()> {
    let ck = Checkpoint::load(ckpt_path)?;
    let mut model = ck.build_model()?;
    let img = pnm::read_pnm(image_path)?;
    if img.channels != model.config.in_channels {
        bail!(
            "image has {} channels, model expects {}",
            img.channels,
            model.config.in_channels
        );
    }
    let (mh, mw) = model.config.input_size;
    let mut image = pnm::bytes_to_image(&img.data, img.channels, img.h, img.w);
    let (mut h, mut w) = (img.h, img.w);
    if (h, w) != (mh, mw) {
        if !allow_resize {
            bail!(
                "image is {h}x{w} but the model expects {mh}x{mw}; pass --resize to rescale"
            );
        }
        image = resize_image(&image, img.channels, h, w, mh, mw);
        (h, w) = (mh, mw);
    }
    let sample = SegSample {
        id: "input".to_string(),
        channels: img.channels,
        h,
        w,
        image,
        mask: vec![0; h * w],
    };
    let masks = model.predict_masks(&[&sample]);
    pnm::write_pgm(out_path, w, h, &masks[0])?;
    println!("wrote mask to {}", out_path.display());

    if let Some(pp) = probs_path {
        let mut g = deco_mamba_core::Graph::inference();
        let x = g.leaf(model.batch_images(&[&sample]), false);
        let out = model.forward(&mut g, x, deco_mamba_core::nn::Mode::Eval);
        let probs = g.softmax(out.logits, 1);
        let pv = g.value(probs);
        let mut bytes = Vec::with_capacity(16 + pv.numel() * 4);
        bytes.extend_from_slice(b"DMPB");
        bytes.extend_from_slice(&(model.config.num_classes as u32).to_le_bytes());
        bytes.extend_from_slice(&(h as u32).to_le_bytes());
        bytes.extend_from_slice(&(w as u32).to_le_bytes());
        for &v in pv.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(pp, bytes)?;
        println!("wrote per-class probabilities to {}", pp.display());
    }
    Ok(())
}

/// Bilinear image resize on a plain [C,H,W] buffer (prediction input path).
fn resize_image(
    image: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let arr = Array::<f32>::from_vec(&[1, channels, h, w], image.to_vec());
    deco_mamba_core::ops::resize::bilinear_resize_array(&arr, oh, ow)
        .data()
        .to_vec()
}

pub fn cmd_describe(config_path: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    // accept either a bare ModelConfig or a full TrainConfig
    let model_cfg: ModelConfig = match serde_json::from_str::<TrainConfig>(&text) {
        Ok(tc) => tc.model,
        Err(_) => serde_json::from_str(&text)
            .with_context(|| "config is neither a training config nor a model config")?,
    };
    model_cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let model = Model::<f32>::new(model_cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    print!("{}", model.describe());
    Ok(())
}
