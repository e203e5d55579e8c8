//! Chroma-grid recoloring: a coarse grid over the (a, b) plane whose cells
//! hold 2x2 affine transforms, looked up per pixel with bilinear weights
//! and applied to the pixel's chroma. Lightness never changes.

use crate::diffcore::slice_lookup;
use crate::diffcore::{Graph, NodeId, Tensor};

/// Working chroma range of the grid; sRGB chroma stays well inside.
pub const CHROMA_MIN: f64 = -110.0;
pub const CHROMA_MAX: f64 = 110.0;

/// Default bins per chroma axis (16 x 16 x 6 = 1536 parameters).
pub const DEFAULT_BINS: usize = 16;

/// The recolor operator's parameters: a bins x bins x 6 grid. Cell vectors
/// decode as row-major A followed by the translation: (a', b') = (a, b) A + t.
#[derive(Debug, Clone, PartialEq)]
pub struct RecolorGrid {
    theta: Tensor,
}

impl RecolorGrid {
    /// Every cell decodes to the identity transform.
    pub fn identity(bins: usize) -> Self {
        assert!(bins >= 2, "recolor grid needs at least 2 bins per axis");
        let mut theta = Tensor::zeros(bins, bins, 6);
        for cell in theta.data_mut().chunks_exact_mut(6) {
            cell[0] = 1.0;
            cell[3] = 1.0;
        }
        RecolorGrid { theta }
    }

    pub fn from_theta(theta: Tensor) -> Self {
        assert_eq!(theta.channels(), 6, "recolor grid must be BxBx6, got {}", theta.shape());
        assert_eq!(theta.height(), theta.width(), "recolor grid must be square");
        RecolorGrid { theta }
    }

    pub fn bins(&self) -> usize {
        self.theta.height()
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut Tensor {
        &mut self.theta
    }

    /// The interpolated affine transform at chroma (a, b): (A, t) with
    /// (a', b') = (a, b) A + t. Queries outside the chroma range clamp.
    pub fn lookup(&self, a: f64, b: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        let (t, _) = slice_lookup(self.theta.data(), self.bins(), CHROMA_MIN, CHROMA_MAX, a, b);
        ([[t[0], t[1]], [t[2], t[3]]], [t[4], t[5]])
    }
}

/// Record the full recolor edit on the tape: Lab conversion, grid slice,
/// conversion back. The grid node may be a parameter for optimization.
pub fn recolor_apply_node(g: &mut Graph, image: NodeId, grid: NodeId) -> NodeId {
    let lab = g.rgb_to_lab(image);
    let sliced = g.recolor_slice(lab, grid, CHROMA_MIN, CHROMA_MAX);
    g.lab_to_rgb(sliced)
}

/// Eager application (used when re-applying stored parameters).
pub fn recolor_apply(image: &Tensor, grid: &RecolorGrid) -> Tensor {
    let mut g = Graph::new();
    let img = g.input(image.clone());
    let gn = g.input(grid.theta().clone());
    let out = recolor_apply_node(&mut g, img, gn);
    g.value(out).clone()
}
