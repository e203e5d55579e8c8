//! Typed CIELab images and opponent color channels.

use crate::diffcore::{colorops, Graph, NodeId, Shape, Tensor};

/// A CIELab image stored as an HxWx3 tensor in (L, a, b) channel order.
/// L is in [0, 100] for in-gamut inputs; chroma from sRGB stays well inside
/// the recolor grid's [-110, 110] working range.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    values: Tensor,
}

impl LabImage {
    pub fn new(values: Tensor) -> Self {
        assert_eq!(values.channels(), 3, "LabImage expects HxWx3, got {}", values.shape());
        LabImage { values }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn shape(&self) -> Shape {
        self.values.shape()
    }

    /// One HxWx1 plane: 0 = L, 1 = a, 2 = b.
    pub fn plane(&self, channel: usize) -> Tensor {
        assert!(channel < 3);
        let (h, w) = (self.values.height(), self.values.width());
        let mut out = Tensor::zeros(h, w, 1);
        for p in 0..h * w {
            out.data_mut()[p] = self.values.data()[p * 3 + channel];
        }
        out
    }
}

/// Eager sRGB -> Lab. Inputs are expected in [0,1]; out-of-range values are
/// clamped exactly as the differentiable path does.
pub fn rgb_to_lab(rgb: &Tensor) -> LabImage {
    assert_eq!(rgb.channels(), 3, "rgb_to_lab expects HxWx3, got {}", rgb.shape());
    let mut data = Vec::with_capacity(rgb.numel());
    for p in rgb.data().chunks_exact(3) {
        let pix = [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0), p[2].clamp(0.0, 1.0)];
        data.extend_from_slice(&colorops::srgb_to_lab(pix));
    }
    LabImage { values: Tensor::new(rgb.shape(), data) }
}

/// Eager Lab -> sRGB. Out-of-gamut results are left unclamped; clamp at the
/// serialization boundary.
pub fn lab_to_rgb(lab: &LabImage) -> Tensor {
    let mut data = Vec::with_capacity(lab.values.numel());
    for p in lab.values.data().chunks_exact(3) {
        data.extend_from_slice(&colorops::lab_to_srgb([p[0], p[1], p[2]]));
    }
    Tensor::new(lab.values.shape(), data)
}

/// Classical opponent channels, recorded on the tape:
/// intensity = (r+g+b)/3, red-green = r-g, blue-yellow = b-(r+g)/2.
pub fn opponent_channels(g: &mut Graph, rgb: NodeId) -> (NodeId, NodeId, NodeId) {
    assert_eq!(g.shape(rgb).channels, 3, "opponent_channels expects HxWx3, got {}", g.shape(rgb));
    let r = g.channel(rgb, 0);
    let gr = g.channel(rgb, 1);
    let b = g.channel(rgb, 2);
    let rg_sum = g.add(r, gr);
    let rgb_sum = g.add(rg_sum, b);
    let intensity = g.scale(rgb_sum, 1.0 / 3.0);
    let red_green = g.sub(r, gr);
    let half_rg = g.scale(rg_sum, 0.5);
    let blue_yellow = g.sub(b, half_rg);
    (intensity, red_green, blue_yellow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opponent_values_on_gray_and_red() {
        let mut g = Graph::new();
        let pix = g.input(Tensor::new(Shape::new(1, 2, 3), vec![0.5, 0.5, 0.5, 1.0, 0.0, 0.0]));
        let (i, rg, by) = opponent_channels(&mut g, pix);
        let iv = g.value(i).data().to_vec();
        let rgv = g.value(rg).data().to_vec();
        let byv = g.value(by).data().to_vec();
        assert!((iv[0] - 0.5).abs() < 1e-12 && rgv[0].abs() < 1e-12 && byv[0].abs() < 1e-12);
        assert!((iv[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((rgv[1] - 1.0).abs() < 1e-12);
        assert!((byv[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn opponent_matches_scalar_loop() {
        let mut vals = vec![];
        let mut s = 0.37_f64;
        for _ in 0..5 * 4 * 3 {
            s = (s * 997.13).fract();
            vals.push(s);
        }
        let img = Tensor::new(Shape::new(5, 4, 3), vals.clone());
        let mut g = Graph::new();
        let n = g.input(img);
        let (i, rg, by) = opponent_channels(&mut g, n);
        for p in 0..20 {
            let (r, gr, b) = (vals[p * 3], vals[p * 3 + 1], vals[p * 3 + 2]);
            assert!((g.value(i).data()[p] - (r + gr + b) / 3.0).abs() < 1e-12);
            assert!((g.value(rg).data()[p] - (r - gr)).abs() < 1e-12);
            assert!((g.value(by).data()[p] - (b - (r + gr) / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lab_white_black_anchors() {
        let img = Tensor::new(Shape::new(1, 2, 3), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let lab = rgb_to_lab(&img);
        let d = lab.values().data();
        assert!((d[0] - 100.0).abs() < 1e-2 && d[1].abs() < 0.01 && d[2].abs() < 0.01);
        assert!(d[3].abs() < 1e-9 && d[4].abs() < 1e-9 && d[5].abs() < 1e-9);
        let back = lab_to_rgb(&lab);
        assert!((back.data()[0] - 1.0).abs() < 1e-3);
        assert!(back.data()[3].abs() < 1e-3);
    }
}
