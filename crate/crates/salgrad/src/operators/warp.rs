//! Backward warping driven by a sparse control-point displacement grid.
//!
//! The control grid upsamples bilinearly to a dense per-pixel displacement;
//! each output pixel samples the source at its own position plus that
//! displacement. During optimization the working image is replaced by the
//! warped image every iteration and the control field resets to zero, so
//! each step optimizes an incremental displacement; the composed map of all
//! commits is tracked separately for re-application.

use crate::diffcore::{kernels, Graph, NodeId, Tensor};

/// Default control point spacing in pixels.
pub const DEFAULT_SPACING: f64 = 16.0;

/// Sparse control-point displacements, (Gh, Gw, 2) in (dy, dx) pixel units.
/// A zero field is the identity warp.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    control: Tensor,
    spacing: f64,
}

impl WarpField {
    /// Zero displacements on a grid sized so control points sit roughly
    /// `spacing` pixels apart over an h x w image.
    pub fn zero(h: usize, w: usize, spacing: f64) -> Self {
        assert!(spacing > 0.0);
        let gh = (((h - 1) as f64 / spacing).round() as usize + 1).max(2);
        let gw = (((w - 1) as f64 / spacing).round() as usize + 1).max(2);
        WarpField { control: Tensor::zeros(gh, gw, 2), spacing }
    }

    pub fn from_control(control: Tensor, spacing: f64) -> Self {
        assert_eq!(control.channels(), 2, "warp control must be GhxGwx2, got {}", control.shape());
        WarpField { control, spacing }
    }

    pub fn control(&self) -> &Tensor {
        &self.control
    }

    pub fn control_mut(&mut self) -> &mut Tensor {
        &mut self.control
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn reset(&mut self) {
        self.control.data_mut().fill(0.0);
    }
}

/// Per-pixel integer positions (y, x) as an HxWx2 tensor.
pub fn identity_coords(h: usize, w: usize) -> Tensor {
    let mut t = Tensor::zeros(h, w, 2);
    for y in 0..h {
        for x in 0..w {
            t.set(y, x, 0, y as f64);
            t.set(y, x, 1, x as f64);
        }
    }
    t
}

/// Upsample a control grid to a dense HxWx2 displacement field.
pub fn warp_densify_node(g: &mut Graph, control: NodeId, h: usize, w: usize) -> NodeId {
    g.resample_bilinear(control, h, w)
}

/// Eager densify.
pub fn warp_densify(field: &WarpField, h: usize, w: usize) -> Tensor {
    kernels::resample_bilinear_forward(field.control(), h, w)
}

/// Record the backward warp of `image` by a dense displacement node.
pub fn warp_sample_node(g: &mut Graph, image: NodeId, dense: NodeId) -> NodeId {
    let shape = g.shape(image);
    let base = identity_coords(shape.height, shape.width);
    let base_n = g.input(base);
    let coords = g.add(base_n, dense);
    g.grid_sample(image, coords)
}

/// Eager backward warp by a dense displacement field.
pub fn warp_sample(image: &Tensor, dense: &Tensor) -> Tensor {
    assert_eq!(dense.channels(), 2, "dense field must be HxWx2");
    assert_eq!(
        (dense.height(), dense.width()),
        (image.height(), image.width()),
        "dense field must match image size"
    );
    let mut coords = identity_coords(image.height(), image.width());
    for (c, d) in coords.data_mut().iter_mut().zip(dense.data()) {
        *c += d;
    }
    kernels::grid_sample_forward(image, &coords)
}

/// The accumulated deformation of a sequence of commits, stored as a dense
/// displacement field R with out(p) = in(p + R(p)).
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedWarp {
    displacement: Tensor,
}

impl ComposedWarp {
    pub fn identity(h: usize, w: usize) -> Self {
        ComposedWarp { displacement: Tensor::zeros(h, w, 2) }
    }

    pub fn from_displacement(displacement: Tensor) -> Self {
        assert_eq!(displacement.channels(), 2);
        ComposedWarp { displacement }
    }

    pub fn displacement(&self) -> &Tensor {
        &self.displacement
    }

    /// Fold one more incremental warp into the composition:
    /// R'(p) = d(p) + R(p + d(p)), sampling R bilinearly.
    pub fn compose_with(&mut self, dense: &Tensor) {
        let shape = self.displacement.shape();
        assert_eq!(dense.shape(), shape, "increment shape mismatch");
        let (h, w) = (shape.height, shape.width);
        let mut out = Tensor::zeros(h, w, 2);
        for y in 0..h {
            for x in 0..w {
                let dy = dense.at(y, x, 0);
                let dx = dense.at(y, x, 1);
                let sy = y as f64 + dy;
                let sx = x as f64 + dx;
                let ry = kernels::bilinear_at(self.displacement.data(), shape, sy, sx, 0);
                let rx = kernels::bilinear_at(self.displacement.data(), shape, sy, sx, 1);
                out.set(y, x, 0, dy + ry);
                out.set(y, x, 1, dx + rx);
            }
        }
        self.displacement = out;
    }

    /// Apply the composed deformation to an image in one sampling pass.
    pub fn apply(&self, image: &Tensor) -> Tensor {
        warp_sample(image, &self.displacement)
    }
}

/// One optimization-iteration commit: replace the working image by its
/// warped version, fold the increment into the composition, zero the field.
pub fn warp_commit(current: &mut Tensor, field: &mut WarpField, composed: &mut ComposedWarp) {
    let dense = warp_densify(field, current.height(), current.width());
    composed.compose_with(&dense);
    *current = warp_sample(current, &dense);
    field.reset();
}
