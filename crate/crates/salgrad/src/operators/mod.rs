//! Differentiable editing operators, the surround-color baseline, the TV
//! regularizer and the parameter sidecar format.

mod baseline;
mod convnet;
mod noise;
mod recolor;
pub mod sidecar;
mod warp;

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{Graph, Tensor};

pub use baseline::{baseline_surround_recolor, BaselineError, DEFAULT_RING_WIDTH};
pub use convnet::{
    convnet_forward, convnet_forward_node, convnet_pretrain, psnr, ConvLayer, ConvNetParams,
    CHANNEL_PLAN, INIT_STD, KERNEL_SIZE, PRETRAIN_ITERS, PRETRAIN_LR,
};
pub use noise::{mask_to_rgb, noise_apply, noise_apply_node, NoiseParams};
pub use recolor::{recolor_apply, recolor_apply_node, RecolorGrid, CHROMA_MAX, CHROMA_MIN, DEFAULT_BINS};
pub use warp::{
    identity_coords, warp_commit, warp_densify, warp_densify_node, warp_sample, warp_sample_node,
    ComposedWarp, WarpField, DEFAULT_SPACING,
};

/// Which editing operator a run or plan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Recolor,
    Warp,
    Convnet,
    Noise,
    Baseline,
}

impl OperatorKind {
    pub fn all_differentiable() -> [OperatorKind; 4] {
        [OperatorKind::Recolor, OperatorKind::Warp, OperatorKind::Convnet, OperatorKind::Noise]
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, OperatorKind::Baseline)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorKind::Recolor => "recolor",
            OperatorKind::Warp => "warp",
            OperatorKind::Convnet => "convnet",
            OperatorKind::Noise => "noise",
            OperatorKind::Baseline => "baseline",
        };
        f.write_str(s)
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recolor" => Ok(OperatorKind::Recolor),
            "warp" => Ok(OperatorKind::Warp),
            "convnet" => Ok(OperatorKind::Convnet),
            "noise" => Ok(OperatorKind::Noise),
            "baseline" => Ok(OperatorKind::Baseline),
            other => Err(format!("unknown operator '{other}' (expected recolor|warp|convnet|noise|baseline)")),
        }
    }
}

/// Frozen operator parameters, as returned by an optimization run or read
/// back from a sidecar file. Noise deltas carry their mask baked in.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorParams {
    Recolor(RecolorGrid),
    Warp(ComposedWarp),
    Convnet(ConvNetParams),
    Noise(NoiseParams),
    Baseline { ring_width: usize },
}

impl OperatorParams {
    pub fn kind(&self) -> OperatorKind {
        match self {
            OperatorParams::Recolor(_) => OperatorKind::Recolor,
            OperatorParams::Warp(_) => OperatorKind::Warp,
            OperatorParams::Convnet(_) => OperatorKind::Convnet,
            OperatorParams::Noise(_) => OperatorKind::Noise,
            OperatorParams::Baseline { .. } => OperatorKind::Baseline,
        }
    }

    /// Re-apply stored parameters to an image. The mask is consulted only
    /// by the baseline (noise deltas are already masked).
    pub fn apply(&self, image: &Tensor, mask: &Tensor) -> Tensor {
        match self {
            OperatorParams::Recolor(grid) => recolor_apply(image, grid),
            OperatorParams::Warp(composed) => composed.apply(image),
            OperatorParams::Convnet(params) => convnet_forward(image, params),
            OperatorParams::Noise(noise) => {
                let mut out = image.clone();
                for (o, d) in out.data_mut().iter_mut().zip(noise.delta().data()) {
                    *o += d;
                }
                out
            }
            OperatorParams::Baseline { ring_width } => {
                baseline_surround_recolor(image, mask, *ring_width).expect("baseline application failed")
            }
        }
    }
}

/// Isotropic total variation of a parameter grid (eager).
pub fn tv_penalty(grid: &Tensor) -> f64 {
    let mut g = Graph::new();
    let n = g.input(grid.clone());
    let tv = g.tv_grid(n);
    g.value(tv).scalar_value()
}
