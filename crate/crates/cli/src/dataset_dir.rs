//! On-disk dataset layout: `images/` (PGM or PPM), `masks/` (PGM with the
//! pixel value as the class index), and a `manifest.txt` listing
//! `classes <N>` followed by one `<id> <split>` line per sample.

use crate::pnm;
use anyhow::{bail, Context, Result};
use deco_mamba_core::data::{Dataset, SegSample};
use std::fs;
use std::path::Path;

pub fn write_dataset(dir: &Path, dataset: &Dataset, splits: &[(String, String)]) -> Result<()> {
    assert_eq!(splits.len(), dataset.len(), "one split entry per sample");
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut manifest = format!("classes {}\n", dataset.num_classes);
    for (sample, (id, split)) in dataset.samples.iter().zip(splits.iter()) {
        assert_eq!(&sample.id, id, "manifest order must match samples");
        let bytes = pnm::image_to_bytes(&sample.image, sample.channels, sample.h, sample.w);
        match sample.channels {
            1 => pnm::write_pgm(&dir.join("images").join(format!("{id}.pgm")), sample.w, sample.h, &bytes)?,
            3 => pnm::write_ppm(&dir.join("images").join(format!("{id}.ppm")), sample.w, sample.h, &bytes)?,
            c => bail!("unsupported channel count {c}"),
        }
        pnm::write_pgm(&dir.join("masks").join(format!("{id}.pgm")), sample.w, sample.h, &sample.mask)?;
        manifest.push_str(&format!("{id} {split}\n"));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Loads the samples of one split ("train", "val", ...), or all when None.
pub fn load_dataset(dir: &Path, split: Option<&str>) -> Result<Dataset> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .with_context(|| format!("reading manifest in {}", dir.display()))?;
    let mut lines = manifest.lines();
    let header = lines.next().context("empty manifest")?;
    let num_classes: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["classes", n] => n.parse().context("bad class count")?,
        _ => bail!("manifest must start with 'classes <N>'"),
    };
    let mut samples = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (id, sp) = (
            parts.next().context("manifest line missing id")?,
            parts.next().context("manifest line missing split")?,
        );
        if let Some(want) = split {
            if sp != want {
                continue;
            }
        }
        let img_path = ["pgm", "ppm"]
            .iter()
            .map(|ext| dir.join("images").join(format!("{id}.{ext}")))
            .find(|p| p.exists())
            .with_context(|| format!("image for {id} not found"))?;
        let img = pnm::read_pnm(&img_path)?;
        let mask_img = pnm::read_pnm(&dir.join("masks").join(format!("{id}.pgm")))?;
        if mask_img.channels != 1 {
            bail!("mask for {id} must be single-channel PGM");
        }
        if (mask_img.w, mask_img.h) != (img.w, img.h) {
            bail!("mask/image size mismatch for {id}");
        }
        if let Some(&bad) = mask_img.data.iter().find(|&&m| m as usize >= num_classes) {
            bail!("mask value {bad} out of range for {num_classes} classes in {id}");
        }
        samples.push(SegSample {
            id: id.to_string(),
            channels: img.channels,
            h: img.h,
            w: img.w,
            image: pnm::bytes_to_image(&img.data, img.channels, img.h, img.w),
            mask: mask_img.data,
        });
    }
    if samples.is_empty() {
        bail!(
            "no samples for split {:?} in {}",
            split.unwrap_or("<all>"),
            dir.display()
        );
    }
    Ok(Dataset { samples, num_classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use deco_mamba_core::data::synth::{synth_generate, SynthSpec};

    #[test]
    fn roundtrip_masks_byte_exact_images_quantized() {
        let spec = SynthSpec { count: 4, h: 32, w: 32, num_classes: 3, ..Default::default() };
        let ds = synth_generate(&spec, 9);
        let splits: Vec<(String, String)> = ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), if i < 3 { "train" } else { "val" }.to_string()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds, &splits).unwrap();

        let train = load_dataset(dir.path(), Some("train")).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(train.num_classes, 3);
        let val = load_dataset(dir.path(), Some("val")).unwrap();
        assert_eq!(val.len(), 1);
        for (orig, loaded) in ds.samples.iter().zip(train.samples.iter()) {
            assert_eq!(orig.mask, loaded.mask, "masks must survive byte-exactly");
            let max_err = orig
                .image
                .iter()
                .zip(loaded.image.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_err <= 0.5 / 255.0 + 1e-6, "image quantization error {max_err}");
        }
    }

    #[test]
    fn missing_split_errors() {
        let spec = SynthSpec { count: 1, h: 32, w: 32, num_classes: 2, ..Default::default() };
        let ds = synth_generate(&spec, 1);
        let splits = vec![(ds.samples[0].id.clone(), "train".to_string())];
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds, &splits).unwrap();
        assert!(load_dataset(dir.path(), Some("test")).is_err());
    }
}
