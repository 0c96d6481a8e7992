//! Training loop: AdamW with a cosine warm-restart schedule, seeded batch
//! shuffling and augmentation, per-step loss logging, per-epoch validation,
//! and best/final checkpointing.

use crate::checkpoint::Checkpoint;
use crate::dataset_dir;
use anyhow::{bail, Context, Result};
use deco_mamba_core::data::{augment, SegSample};
use deco_mamba_core::graph::Graph;
use deco_mamba_core::loss::{total_loss, LossConfig};
use deco_mamba_core::metrics::EvalReport;
use deco_mamba_core::net::{Model, ModelConfig};
use deco_mamba_core::nn::Mode;
use deco_mamba_core::optim::{AdamW, AdamWConfig, CosineRestarts};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Initial restart period in epochs; doubles after each restart.
    pub t0: f64,
    #[serde(default = "default_t_mult")]
    pub t_mult: f64,
    #[serde(default)]
    pub min_lr: f64,
}

fn default_t_mult() -> f64 {
    2.0
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { t0: 2.0, t_mult: 2.0, min_lr: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_true")]
    pub augment: bool,
    /// Evaluate the train split as well (slower; logged only).
    #[serde(default)]
    pub eval_train_split: bool,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// The configuration mirroring the published settings: AdamW at 1e-4,
    /// batch 16, 224x224 inputs, cosine restarts with T0 = 2.
    pub fn standard(data_dir: PathBuf, out_dir: PathBuf, num_classes: usize) -> Self {
        TrainConfig {
            model: ModelConfig::v0(num_classes, 1),
            optimizer: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            epochs: 120,
            batch_size: 16,
            seed: 0,
            data_dir,
            out_dir,
            augment: true,
            eval_train_split: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| anyhow::anyhow!("model config: {e}"))?;
        if self.optimizer.lr <= 0.0 {
            bail!("optimizer.lr must be positive");
        }
        if self.schedule.t0 < 1.0 {
            bail!("schedule.t0 must be >= 1 epoch");
        }
        if self.batch_size < 1 {
            bail!("batch_size must be >= 1");
        }
        if self.epochs < 1 {
            bail!("epochs must be >= 1");
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_total_loss: f64,
    pub val: EvalReport,
}

pub struct TrainOutcome {
    pub best_val_dice: f64,
    pub best_epoch: usize,
    pub final_ckpt: PathBuf,
    pub best_ckpt: PathBuf,
    pub history: Vec<EpochStats>,
    /// Per-step total losses, for reproducibility checks.
    pub loss_trajectory: Vec<f32>,
}

pub fn train(cfg: &TrainConfig, log_to_stdout: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join("train.log");
    let mut log = fs::OpenOptions::new().create(true).append(true).open(&log_path)?;

    let train_set = dataset_dir::load_dataset(&cfg.data_dir, Some("train"))?;
    let val_set = dataset_dir::load_dataset(&cfg.data_dir, Some("val"))?;
    if train_set.num_classes != cfg.model.num_classes {
        bail!(
            "dataset has {} classes but the model expects {}",
            train_set.num_classes,
            cfg.model.num_classes
        );
    }

    let mut model = Model::<f32>::new(cfg.model.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut opt = AdamW::new(cfg.optimizer.clone(), &model.store);
    let schedule = CosineRestarts {
        peak_lr: cfg.optimizer.lr,
        min_lr: cfg.schedule.min_lr,
        t0: cfg.schedule.t0,
        t_mult: cfg.schedule.t_mult,
    };
    let loss_cfg = LossConfig {
        supervision: cfg.model.supervision,
        lambdas: cfg.model.lambdas.clone(),
        alpha: cfg.model.alpha,
        reverse_scale_weights: cfg.model.reverse_scale_weights,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let mut global_step = 0u64;
    let mut best_val_dice = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut loss_trajectory = Vec::new();
    let best_ckpt = cfg.out_dir.join("best.dmck");
    let final_ckpt = cfg.out_dir.join("final.dmck");

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<SegSample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        augment::augment(&train_set.samples[i], &mut rng)
                    } else {
                        train_set.samples[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&SegSample> = samples.iter().collect();
            let images = model.batch_images(&refs);
            let mask: Vec<u8> = samples.iter().flat_map(|s| s.mask.iter().copied()).collect();
            let (h, w) = cfg.model.input_size;

            let mut g = Graph::<f32>::new();
            let x = g.leaf(images, false);
            let out = model.forward(&mut g, x, Mode::Train);
            let lo = total_loss(
                &mut g,
                out.logits,
                &out.aux,
                &mask,
                samples.len(),
                h,
                w,
                cfg.model.num_classes,
                &loss_cfg,
            );
            if !lo.report.total.is_finite() {
                bail!("non-finite loss at step {global_step} (epoch {epoch}): aborting");
            }
            g.backward(lo.total);

            let grads: Vec<Option<deco_mamba_core::Array<f32>>> = opt
                .params
                .iter()
                .map(|&id| g.param_grad(&model.store, id).cloned())
                .collect();
            let epoch_t = epoch as f64 + bi as f64 / steps_per_epoch as f64;
            let lr = schedule.lr_at(epoch_t);
            opt.step(&mut model.store, &grads, lr);

            epoch_loss += lo.report.total;
            loss_trajectory.push(lo.report.total as f32);
            let line = format!(
                "step={global_step} epoch={epoch} lr={lr:.8} {}",
                lo.report.log_line()
            );
            writeln!(log, "{line}")?;
            if log_to_stdout && bi == 0 {
                println!("{line}");
            }
            global_step += 1;
        }
        let mean_loss = epoch_loss / steps_per_epoch as f64;

        let val = model.evaluate(&val_set, cfg.batch_size);
        if cfg.eval_train_split {
            let tr = model.evaluate(&train_set, cfg.batch_size);
            writeln!(log, "epoch={epoch} split=train mean_dice={:.6}", tr.mean_dice)?;
        }
        writeln!(
            log,
            "epoch={epoch} split=val mean_loss={mean_loss:.6} mean_dice={:.6} mean_hd95={:.6}",
            val.mean_dice, val.mean_hd95
        )?;
        log.flush()?;
        if log_to_stdout {
            println!(
                "epoch={epoch} mean_loss={mean_loss:.6} val_dice={:.6} val_hd95={:.6}",
                val.mean_dice, val.mean_hd95
            );
        }
        if val.mean_dice > best_val_dice {
            best_val_dice = val.mean_dice;
            best_epoch = epoch;
            Checkpoint::from_model(&model, Some(&opt), global_step).save(&best_ckpt)?;
        }
        history.push(EpochStats { epoch, mean_total_loss: mean_loss, val });
    }

    Checkpoint::from_model(&model, Some(&opt), global_step).save(&final_ckpt)?;
    Ok(TrainOutcome {
        best_val_dice,
        best_epoch,
        final_ckpt,
        best_ckpt,
        history,
        loss_trajectory,
    })
}
