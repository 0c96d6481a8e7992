//! Checkpoint binary format, little-endian throughout:
//!
//! ```text
//! magic    4  b"DMCK"
//! version  u32 = 1
//! step     u64
//! cfg_len  u32, followed by the ModelConfig JSON echo (canonical string)
//! n_rec    u32
//! record   u16 path_len + path bytes, u8 dtype (0=f32, 1=f64),
//!          u8 flags (bit0 trainable), u8 rank, u32 dims[rank],
//!          raw values
//! opt      u8 present; when 1: u64 adam step, then for every trainable
//!          record in order its first and second moment arrays (same shape
//!          and dtype as the parameter)
//! ```
//!
//! Loading keeps the config JSON verbatim, so load -> save reproduces the
//! file byte for byte.

use anyhow::{bail, Context, Result};
use deco_mamba_core::net::{Model, ModelConfig};
use deco_mamba_core::optim::AdamW;
use deco_mamba_core::Array;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Record {
    pub path: String,
    pub trainable: bool,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Record {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct OptState {
    pub step: u64,
    /// (m, v) per trainable record, in record order.
    pub moments: Vec<(Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_json: String,
    pub global_step: u64,
    pub records: Vec<Record>,
    pub optimizer: Option<OptState>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, opt: Option<&AdamW<f32>>, global_step: u64) -> Self {
        let records: Vec<Record> = model
            .store
            .iter()
            .map(|(_, e)| Record {
                path: e.path.clone(),
                trainable: e.trainable,
                dims: e.value.shape().to_vec(),
                data: e.value.data().to_vec(),
            })
            .collect();
        let optimizer = opt.map(|o| OptState {
            step: o.step,
            moments: o
                .m
                .iter()
                .zip(o.v.iter())
                .map(|(m, v)| (m.data().to_vec(), v.data().to_vec()))
                .collect(),
        });
        Checkpoint {
            config_json: serde_json::to_string(&model.config).expect("config serializes"),
            global_step,
            records,
            optimizer,
        }
    }

    pub fn config(&self) -> Result<ModelConfig> {
        serde_json::from_str(&self.config_json).context("checkpoint config JSON")
    }

    /// Total element count of trainable parameter records.
    pub fn trainable_elements(&self) -> usize {
        self.records.iter().filter(|r| r.trainable).map(|r| r.numel()).sum()
    }

    /// Rebuild the model this checkpoint was saved from and restore every
    /// record bit-exactly.
    pub fn build_model(&self) -> Result<Model<f32>> {
        let config = self.config()?;
        let mut model = Model::<f32>::new(config).map_err(|e| anyhow::anyhow!("{e}"))?;
        if model.store.len() != self.records.len() {
            bail!(
                "checkpoint has {} records but the configuration builds {} parameters",
                self.records.len(),
                model.store.len()
            );
        }
        for (id, rec) in model.store.ids().collect::<Vec<_>>().into_iter().zip(&self.records) {
            let entry_path = model.store.entry(id).path.clone();
            if entry_path != rec.path {
                bail!("parameter order mismatch: expected {entry_path}, found {}", rec.path);
            }
            model.store.set_value(id, Array::from_vec(&rec.dims, rec.data.clone()));
        }
        Ok(model)
    }

    /// Restore optimizer moments into a freshly constructed AdamW.
    pub fn restore_optimizer(&self, opt: &mut AdamW<f32>) -> Result<()> {
        let Some(state) = &self.optimizer else {
            bail!("checkpoint has no optimizer state")
        };
        if state.moments.len() != opt.params.len() {
            bail!("optimizer state length mismatch");
        }
        opt.step = state.step;
        for (i, (m, v)) in state.moments.iter().enumerate() {
            let shape = opt.m[i].shape().to_vec();
            opt.m[i] = Array::from_vec(&shape, m.clone());
            opt.v[i] = Array::from_vec(&shape, v.clone());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.global_step.to_le_bytes());
        let cfg = self.config_json.as_bytes();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            let pb = r.path.as_bytes();
            out.extend_from_slice(&(pb.len() as u16).to_le_bytes());
            out.extend_from_slice(pb);
            out.push(0u8); // dtype f32
            out.push(r.trainable as u8);
            out.push(r.dims.len() as u8);
            for &d in &r.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.optimizer {
            None => out.push(0u8),
            Some(state) => {
                out.push(1u8);
                out.extend_from_slice(&state.step.to_le_bytes());
                for (m, v) in &state.moments {
                    for &x in m {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                    for &x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            bail!("bad checkpoint magic {:?} (expected \"DMCK\")", magic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            bail!("unsupported checkpoint version {version}");
        }
        let global_step = cur.u64()?;
        let cfg_len = cur.u32()? as usize;
        let config_json = String::from_utf8(cur.take(cfg_len)?.to_vec())?;
        let n_rec = cur.u32()? as usize;
        let mut records = Vec::with_capacity(n_rec);
        for _ in 0..n_rec {
            let plen = cur.u16()? as usize;
            let path = String::from_utf8(cur.take(plen)?.to_vec())?;
            let dtype = cur.u8()?;
            if dtype != 0 {
                bail!("record {path}: only f32 checkpoints are supported (dtype {dtype})");
            }
            let trainable = cur.u8()? != 0;
            let rank = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32()? as usize);
            }
            let numel: usize = dims.iter().product();
            let raw = cur.take(numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push(Record { path, trainable, dims, data });
        }
        let optimizer = match cur.u8()? {
            0 => None,
            1 => {
                let step = cur.u64()?;
                let mut moments = Vec::new();
                for r in records.iter().filter(|r| r.trainable) {
                    let n = r.numel();
                    let m = cur
                        .take(n * 4)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    let v = cur
                        .take(n * 4)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    moments.push((m, v));
                }
                Some(OptState { step, moments })
            }
            other => bail!("bad optimizer-present flag {other}"),
        };
        if cur.pos != bytes.len() {
            bail!("{} trailing bytes after checkpoint payload", bytes.len() - cur.pos);
        }
        Ok(Checkpoint { config_json, global_step, records, optimizer })
    }
}

/// Human-readable field-level diff of two model configurations.
pub fn config_diff(a: &ModelConfig, b: &ModelConfig) -> Vec<String> {
    let ja = serde_json::to_value(a).expect("serializable");
    let jb = serde_json::to_value(b).expect("serializable");
    let (ma, mb) = (ja.as_object().unwrap(), jb.as_object().unwrap());
    let mut diffs = Vec::new();
    for (k, va) in ma {
        let vb = &mb[k];
        if va != vb {
            diffs.push(format!("{k}: checkpoint={va} requested={vb}"));
        }
    }
    diffs
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!("truncated checkpoint (need {n} bytes at offset {})", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use deco_mamba_core::net::ModelConfig;

    fn tiny_config() -> ModelConfig {
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

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = Model::<f32>::new(tiny_config()).unwrap();
        let ck = Checkpoint::from_model(&model, None, 17);
        let bytes1 = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes1).unwrap();
        let bytes2 = back.to_bytes();
        assert_eq!(bytes1, bytes2);
        assert_eq!(back.global_step, 17);
    }

    #[test]
    fn trainable_elements_match_count_params() {
        let model = Model::<f32>::new(tiny_config()).unwrap();
        let ck = Checkpoint::from_model(&model, None, 0);
        assert_eq!(ck.trainable_elements(), model.count_params());
    }

    #[test]
    fn corrupted_magic_is_a_clean_error() {
        let model = Model::<f32>::new(tiny_config()).unwrap();
        let mut bytes = Checkpoint::from_model(&model, None, 0).to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn restored_model_reproduces_values() {
        let model = Model::<f32>::new(tiny_config()).unwrap();
        let ck = Checkpoint::from_model(&model, None, 3);
        let restored = ck.build_model().unwrap();
        for ((_, a), (_, b)) in model.store.iter().zip(restored.store.iter()) {
            assert_eq!(a.value.data(), b.value.data(), "{}", a.path);
        }
    }

    #[test]
    fn config_diff_lists_changed_fields() {
        let a = tiny_config();
        let mut b = tiny_config();
        b.num_classes = 5;
        b.seed = 9;
        let d = config_diff(&a, &b);
        assert_eq!(d.len(), 2);
        assert!(d.iter().any(|s| s.starts_with("num_classes")));
    }
}
