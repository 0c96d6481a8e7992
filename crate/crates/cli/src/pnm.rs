//! Binary PNM image formats: 8-bit grayscale PGM (P5) and color PPM (P6).
//! Writers emit the exact header "P5\n{w} {h}\n255\n" (no comments, single
//! whitespace separators) so files are byte-reproducible.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::Path;

pub fn write_pgm(path: &Path, w: usize, h: usize, data: &[u8]) -> Result<()> {
    assert_eq!(data.len(), w * h, "pgm payload size");
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(data);
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_ppm(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
    assert_eq!(rgb.len(), 3 * w * h, "ppm payload size");
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub struct PnmImage {
    /// 1 (PGM) or 3 (PPM) interleaved channels.
    pub channels: usize,
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

/// Reads P5 or P6 with maxval 255.
pub fn read_pnm(path: &Path) -> Result<PnmImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_pnm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn parse_pnm(bytes: &[u8]) -> Result<PnmImage> {
    if bytes.len() < 2 {
        bail!("not a PNM file");
    }
    let channels = match &bytes[..2] {
        b"P5" => 1usize,
        b"P6" => 3usize,
        other => bail!("unsupported PNM magic {:?}", String::from_utf8_lossy(other)),
    };
    let mut pos = 2usize;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            bail!("comments are not part of the on-disk format");
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PNM header");
        }
        let tok = std::str::from_utf8(&bytes[start..pos])?;
        fields.push(tok.parse::<usize>().context("bad header field")?);
    }
    // exactly one whitespace byte after maxval
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        bail!("maxval must be 255, got {maxval}");
    }
    let need = channels * w * h;
    if bytes.len() < pos + need {
        bail!("payload too short: need {need} bytes");
    }
    Ok(PnmImage { channels, w, h, data: bytes[pos..pos + need].to_vec() })
}

/// Float [C,H,W] image in [0,1] -> interleaved bytes (rounded).
pub fn image_to_bytes(image: &[f32], channels: usize, h: usize, w: usize) -> Vec<u8> {
    let mut out = vec![0u8; channels * h * w];
    for p in 0..h * w {
        for c in 0..channels {
            let v = image[c * h * w + p].clamp(0.0, 1.0);
            out[p * channels + c] = (v * 255.0).round() as u8;
        }
    }
    out
}

/// Interleaved bytes -> float [C,H,W] in [0,1].
pub fn bytes_to_image(data: &[u8], channels: usize, h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; channels * h * w];
    for p in 0..h * w {
        for c in 0..channels {
            out[c * h * w + p] = data[p * channels + c] as f32 / 255.0;
        }
    }
    out
}
