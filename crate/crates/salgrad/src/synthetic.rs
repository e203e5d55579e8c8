//! Deterministic synthetic benchmark images used by the test suites and
//! reproducible from the CLI docs.

use crate::diffcore::Tensor;

/// Uniform gray image.
pub fn gray(h: usize, w: usize, level: f64) -> Tensor {
    let mut img = Tensor::zeros(h, w, 3);
    img.data_mut().fill(level);
    img
}

/// A colored disk centered at (cy, cx); returns the image and the disk mask.
pub fn disk_at(
    h: usize,
    w: usize,
    cy: f64,
    cx: f64,
    radius: f64,
    disk_rgb: [f64; 3],
    bg: f64,
) -> (Tensor, Tensor) {
    let mut img = gray(h, w, bg);
    let mut mask = Tensor::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            if (dy * dy + dx * dx).sqrt() <= radius {
                for (c, &v) in disk_rgb.iter().enumerate() {
                    img.set(y, x, c, v);
                }
                mask.set(y, x, 0, 1.0);
            }
        }
    }
    (img, mask)
}

/// The canonical pop-out stimulus: red disk of radius 10% of the width,
/// centered on a mid-gray background.
pub fn red_disk_on_gray(h: usize, w: usize) -> (Tensor, Tensor) {
    disk_at(h, w, h as f64 / 2.0, w as f64 / 2.0, 0.1 * w as f64, [1.0, 0.0, 0.0], 0.5)
}

/// Flat color of the square stimulus in [`square_on_texture`].
pub const SQUARE_RGB: [f64; 3] = [1.0, 0.1, 0.1];

/// A flat-color square on a periodic grayscale texture; returns the image
/// and the square mask. The square pops out of the weave both in chroma
/// and in texture.
pub fn square_on_texture(h: usize, w: usize, square: usize) -> (Tensor, Tensor) {
    let mut img = Tensor::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let t = 0.5
                + 0.12 * (y as f64 * std::f64::consts::TAU / 8.0).sin()
                + 0.12 * (x as f64 * std::f64::consts::TAU / 8.0).sin();
            for c in 0..3 {
                img.set(y, x, c, t);
            }
        }
    }
    let top = (h - square) / 2;
    let left = (w - square) / 2;
    let mut mask = Tensor::zeros(h, w, 1);
    for y in top..top + square {
        for x in left..left + square {
            img.set(y, x, 0, SQUARE_RGB[0]);
            img.set(y, x, 1, SQUARE_RGB[1]);
            img.set(y, x, 2, SQUARE_RGB[2]);
            mask.set(y, x, 0, 1.0);
        }
    }
    (img, mask)
}

/// Two separated colored blobs on gray; returns the image and both blob
/// masks (for pipeline tests).
pub fn two_blobs(h: usize, w: usize) -> (Tensor, Tensor, Tensor) {
    let blue = [0.0, 0.1, 1.0];
    let (mut img, mask_a) = disk_at(h, w, h as f64 * 0.3, w as f64 * 0.28, w as f64 * 0.12, [1.0, 0.0, 0.0], 0.5);
    let (_, mask_b) = disk_at(h, w, h as f64 * 0.72, w as f64 * 0.7, w as f64 * 0.12, blue, 0.5);
    for (dst, &m) in img.data_mut().chunks_exact_mut(3).zip(mask_b.data()) {
        if m > 0.0 {
            dst.copy_from_slice(&blue);
        }
    }
    (img, mask_a, mask_b)
}
