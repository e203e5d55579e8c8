//! Raster and text file IO: PNG in/out (JPEG accepted read-only), masks,
//! manifests and key=value config files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{GrayImage, ImageReader, RgbImage};
use salgrad::colorvision::SaliencyMap;
use salgrad::objective::Mask;
use salgrad::Tensor;

/// Decode an 8-bit raster file to an RGB tensor in [0, 1].
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = ImageReader::open(path)
        .with_context(|| format!("cannot open image {}", path.display()))?
        .decode()
        .with_context(|| format!("cannot decode image {}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut t = Tensor::zeros(h as usize, w as usize, 3);
    for (p, px) in img.pixels().enumerate() {
        for c in 0..3 {
            t.data_mut()[p * 3 + c] = px.0[c] as f64 / 255.0;
        }
    }
    Ok(t)
}

/// Load a grayscale mask raster, binarized at 128; optionally feathered
/// with a 2 px Gaussian.
pub fn load_mask(path: &Path, soft: bool) -> Result<Mask> {
    let img = ImageReader::open(path)
        .with_context(|| format!("cannot open mask {}", path.display()))?
        .decode()
        .with_context(|| format!("cannot decode mask {}", path.display()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let mut t = Tensor::zeros(h as usize, w as usize, 1);
    for (p, px) in img.pixels().enumerate() {
        t.data_mut()[p] = if px.0[0] >= 128 { 1.0 } else { 0.0 };
    }
    let mask = Mask::new(t);
    Ok(if soft { mask.feather(2.0) } else { mask })
}

/// Encode an RGB tensor to 8-bit PNG; values clamp to [0, 1] here, at the
/// serialization boundary only.
pub fn save_rgb(path: &Path, t: &Tensor) -> Result<()> {
    let (h, w) = (t.height(), t.width());
    let mut img = RgbImage::new(w as u32, h as u32);
    for (p, px) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (t.data()[p * 3 + c].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    img.save(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Saliency maps serialize as 8-bit grayscale, value = round(255 * s).
pub fn save_saliency(path: &Path, map: &SaliencyMap) -> Result<()> {
    let shape = map.shape();
    let img = GrayImage::from_raw(shape.width as u32, shape.height as u32, map.to_gray_bytes())
        .expect("buffer size matches dimensions");
    img.save(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Ordered key=value lines (manifest and config file format). Lines
/// starting with '#' and blank lines are ignored on read.
pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

pub fn write_kv(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Frame files of a directory: *.png sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read frames directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    frames.sort();
    Ok(frames)
}
