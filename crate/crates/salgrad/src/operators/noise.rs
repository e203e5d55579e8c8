//! Masked additive perturbation: the unconstrained operator that
//! demonstrates how freely-optimized pixels fool the saliency model while
//! the stimulus stays visibly present.

use crate::diffcore::{Graph, NodeId, Tensor};

/// Additive per-pixel RGB perturbation; only the masked region receives it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    delta: Tensor,
}

impl NoiseParams {
    pub fn zero(h: usize, w: usize) -> Self {
        NoiseParams { delta: Tensor::zeros(h, w, 3) }
    }

    pub fn from_delta(delta: Tensor) -> Self {
        assert_eq!(delta.channels(), 3, "noise delta must be HxWx3, got {}", delta.shape());
        NoiseParams { delta }
    }

    pub fn delta(&self) -> &Tensor {
        &self.delta
    }

    pub fn delta_mut(&mut self) -> &mut Tensor {
        &mut self.delta
    }

    /// The delta with the mask baked in (zero outside), as stored in plans.
    pub fn masked(&self, mask: &Tensor) -> Tensor {
        
        apply_mask(&self.delta, mask)
    }
}

/// Expand an HxWx1 mask across three channels.
pub fn mask_to_rgb(mask: &Tensor) -> Tensor {
    assert_eq!(mask.channels(), 1, "mask must be HxWx1, got {}", mask.shape());
    let (h, w) = (mask.height(), mask.width());
    let mut out = Tensor::zeros(h, w, 3);
    for (dst, &m) in out.data_mut().chunks_exact_mut(3).zip(mask.data()) {
        dst.fill(m);
    }
    out
}

fn apply_mask(delta: &Tensor, mask: &Tensor) -> Tensor {
    let mask3 = mask_to_rgb(mask);
    let mut out = delta.clone();
    for (d, m) in out.data_mut().iter_mut().zip(mask3.data()) {
        *d *= m;
    }
    out
}

/// Record image + mask o delta on the tape.
pub fn noise_apply_node(g: &mut Graph, image: NodeId, delta: NodeId, mask3: NodeId) -> NodeId {
    assert_eq!(g.shape(image), g.shape(delta), "noise delta must match image shape");
    assert_eq!(g.shape(image), g.shape(mask3), "mask must match image shape");
    let gated = g.mul(delta, mask3);
    g.add(image, gated)
}

/// Eager application.
pub fn noise_apply(image: &Tensor, noise: &NoiseParams, mask: &Tensor) -> Tensor {
    assert_eq!(image.shape(), noise.delta.shape(), "noise delta must match image shape");
    assert_eq!(
        (mask.height(), mask.width()),
        (image.height(), image.width()),
        "mask must match image size"
    );
    let gated = apply_mask(&noise.delta, mask);
    let mut out = image.clone();
    for (o, d) in out.data_mut().iter_mut().zip(gated.data()) {
        *o += d;
    }
    out
}
