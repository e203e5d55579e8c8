//! Non-learned comparison edit: paint the masked region with the dominant
//! chroma of its surrounding ring and translate its lightness to match the
//! ring's average. Evaluation-only; nothing here is differentiable.

use thiserror::Error;

use crate::colorvision::{lab_to_rgb, rgb_to_lab, LabImage};
use crate::diffcore::Tensor;

/// Default ring width in pixels.
pub const DEFAULT_RING_WIDTH: usize = 8;

/// Chroma histogram bin size (CIELab units).
const BIN_SIZE: f64 = 10.0;
const CHROMA_LO: f64 = -110.0;
const BINS: usize = 22;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("surrounding ring is empty (mask covers the whole image?)")]
    EmptyRing,
}

/// Chebyshev dilation by `radius` pixels.
fn dilate(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..radius {
        let prev = cur.clone();
        for y in 0..h {
            for x in 0..w {
                if prev[y * w + x] {
                    continue;
                }
                'scan: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let ny = y as i64 + dy;
                        let nx = x as i64 + dx;
                        if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w && prev[ny as usize * w + nx as usize] {
                            cur[y * w + x] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    cur
}

fn chroma_bin(v: f64) -> usize {
    (((v - CHROMA_LO) / BIN_SIZE).floor() as i64).clamp(0, BINS as i64 - 1) as usize
}

fn bin_center(i: usize) -> f64 {
    CHROMA_LO + (i as f64 + 0.5) * BIN_SIZE
}

/// The Lab-domain edit: replaces in-mask chroma with the ring's dominant
/// histogram bin center and shifts in-mask L so its mean equals the ring's
/// mean L exactly. Returns (lab image, (mode_a, mode_b), l_shift).
pub(crate) fn surround_recolor_lab(
    image: &Tensor,
    mask: &Tensor,
    ring_width: usize,
) -> Result<(LabImage, (f64, f64), f64), BaselineError> {
    let (h, w) = (image.height(), image.width());
    assert_eq!(image.channels(), 3, "baseline expects an RGB image");
    assert_eq!((mask.height(), mask.width()), (h, w), "mask must match image size");
    let inside: Vec<bool> = mask.data().iter().map(|&m| m > 0.0).collect();
    if !inside.iter().any(|&b| b) {
        return Err(BaselineError::EmptyMask);
    }
    let dilated = dilate(&inside, h, w, ring_width);
    let ring: Vec<bool> = dilated.iter().zip(&inside).map(|(&d, &i)| d && !i).collect();
    if !ring.iter().any(|&b| b) {
        return Err(BaselineError::EmptyRing);
    }

    let lab = rgb_to_lab(image);
    let lv = lab.values();
    let mut hist = vec![0u64; BINS * BINS];
    let mut ring_l_sum = 0.0;
    let mut ring_n = 0.0;
    let mut in_l_sum = 0.0;
    let mut in_n = 0.0;
    for p in 0..h * w {
        let (l, a, b) = (lv.data()[p * 3], lv.data()[p * 3 + 1], lv.data()[p * 3 + 2]);
        if ring[p] {
            hist[chroma_bin(a) * BINS + chroma_bin(b)] += 1;
            ring_l_sum += l;
            ring_n += 1.0;
        } else if inside[p] {
            in_l_sum += l;
            in_n += 1.0;
        }
    }
    let mode = hist
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("nonempty histogram");
    let (mode_a, mode_b) = (bin_center(mode / BINS), bin_center(mode % BINS));
    let l_shift = ring_l_sum / ring_n - in_l_sum / in_n;

    let mut out_lab = lv.clone();
    for p in 0..h * w {
        if inside[p] {
            out_lab.data_mut()[p * 3] += l_shift;
            out_lab.data_mut()[p * 3 + 1] = mode_a;
            out_lab.data_mut()[p * 3 + 2] = mode_b;
        }
    }
    Ok((LabImage::new(out_lab), (mode_a, mode_b), l_shift))
}

/// Replace the masked region's chroma with the mode of a 2-D chroma
/// histogram over the surrounding ring, and translate its lightness so the
/// in-mask mean L equals the ring's mean L. Output may be out of gamut;
/// clamp at serialization.
pub fn baseline_surround_recolor(
    image: &Tensor,
    mask: &Tensor,
    ring_width: usize,
) -> Result<Tensor, BaselineError> {
    let (lab, _, _) = surround_recolor_lab(image, mask, ring_width)?;
    Ok(lab_to_rgb(&lab))
}

#[cfg(test)]
mod tests {
    use super::*;
    

    fn rect_mask(h: usize, w: usize, top: usize, left: usize, size: usize) -> Tensor {
        let mut m = Tensor::zeros(h, w, 1);
        for y in top..top + size {
            for x in left..left + size {
                m.set(y, x, 0, 1.0);
            }
        }
        m
    }

    #[test]
    fn matching_surround_changes_at_most_one_bin() {
        let img = Tensor::filled(24, 24, 3, 0.0).map(|_| 0.0);
        let mut img = img;
        for p in img.data_mut().chunks_exact_mut(3) {
            p.copy_from_slice(&[0.3, 0.6, 0.35]);
        }
        let mask = rect_mask(24, 24, 8, 8, 6);
        let out = baseline_surround_recolor(&img, &mask, DEFAULT_RING_WIDTH).unwrap();
        let lab_in = rgb_to_lab(&img);
        let lab_out = rgb_to_lab(&out);
        for p in 0..24 * 24 {
            let da = (lab_out.values().data()[p * 3 + 1] - lab_in.values().data()[p * 3 + 1]).abs();
            let db = (lab_out.values().data()[p * 3 + 2] - lab_in.values().data()[p * 3 + 2]).abs();
            assert!(da <= 10.0 + 1e-6 && db <= 10.0 + 1e-6, "pixel {p} moved by ({da}, {db})");
        }
    }

    #[test]
    fn red_square_on_green_takes_green_bin_center_and_ring_lightness() {
        let mut img = Tensor::zeros(32, 32, 3);
        for p in img.data_mut().chunks_exact_mut(3) {
            p.copy_from_slice(&[0.1, 0.7, 0.1]);
        }
        let mask = rect_mask(32, 32, 12, 12, 8);
        for y in 12..20 {
            for x in 12..20 {
                img.set(y, x, 0, 0.9);
                img.set(y, x, 1, 0.05);
                img.set(y, x, 2, 0.05);
            }
        }
        let (lab_out, (mode_a, mode_b), _) = surround_recolor_lab(&img, &mask, DEFAULT_RING_WIDTH).unwrap();
        // hand computation of green's 10-unit bin centers
        let green_lab = crate::diffcore::colorops::srgb_to_lab([0.1, 0.7, 0.1]);
        let expect_a = -110.0 + (((green_lab[1] + 110.0) / 10.0).floor() + 0.5) * 10.0;
        let expect_b = -110.0 + (((green_lab[2] + 110.0) / 10.0).floor() + 0.5) * 10.0;
        assert_eq!((mode_a, mode_b), (expect_a, expect_b));
        // every in-mask pixel now carries the ring's dominant chroma bin center
        for y in 12..20 {
            for x in 12..20 {
                let p = y * 32 + x;
                assert_eq!(lab_out.values().data()[p * 3 + 1], expect_a);
                assert_eq!(lab_out.values().data()[p * 3 + 2], expect_b);
            }
        }
        // mean L inside equals mean L of the ring exactly
        let inside: Vec<bool> = mask.data().iter().map(|&m| m > 0.0).collect();
        let dilated = dilate(&inside, 32, 32, DEFAULT_RING_WIDTH);
        let lab_in = rgb_to_lab(&img);
        let mut ring_sum = 0.0;
        let mut ring_n = 0.0;
        let mut in_sum = 0.0;
        let mut in_n = 0.0;
        for p in 0..32 * 32 {
            if dilated[p] && !inside[p] {
                ring_sum += lab_in.values().data()[p * 3];
                ring_n += 1.0;
            } else if inside[p] {
                in_sum += lab_out.values().data()[p * 3];
                in_n += 1.0;
            }
        }
        assert!(
            (in_sum / in_n - ring_sum / ring_n).abs() < 1e-9,
            "mean L inside {} vs ring {}",
            in_sum / in_n,
            ring_sum / ring_n
        );
    }

    #[test]
    fn empty_mask_and_full_mask_error() {
        let img = Tensor::filled(8, 8, 3, 0.5);
        let empty = Tensor::zeros(8, 8, 1);
        assert_eq!(baseline_surround_recolor(&img, &empty, 4).unwrap_err(), BaselineError::EmptyMask);
        let full = Tensor::filled(8, 8, 1, 1.0);
        assert_eq!(baseline_surround_recolor(&img, &full, 4).unwrap_err(), BaselineError::EmptyRing);
    }

    #[test]
    fn shape_is_rejected_on_mismatch() {
        let img = Tensor::zeros(8, 8, 3);
        let mask = Tensor::zeros(9, 8, 1);
        assert!(std::panic::catch_unwind(|| baseline_surround_recolor(&img, &mask, 4)).is_err());
    }
}
