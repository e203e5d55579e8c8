//! Differentiable color conversion and the saliency backend contract.

mod color;
mod saliency;

pub use color::{lab_to_rgb, opponent_channels, rgb_to_lab, LabImage};
pub use saliency::{
    active_backend, center_surround, predict_saliency, register_backend, BackendHandle,
    BuiltinSaliency, SaliencyBackend, SaliencyMap, SQUASH_MU, SQUASH_S,
};
