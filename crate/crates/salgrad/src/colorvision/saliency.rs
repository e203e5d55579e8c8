//! The differentiable saliency backend: a pluggable contract plus the
//! built-in classical multi-scale center-surround predictor.

use std::sync::{Arc, OnceLock, RwLock};

use crate::diffcore::{Graph, NodeId, Shape, Tensor};

use super::color::opponent_channels;

/// Per-pixel attention prediction in [0, 1], same spatial size as the
/// queried image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    values: Tensor,
}

impl SaliencyMap {
    pub fn new(values: Tensor) -> Self {
        assert_eq!(values.channels(), 1, "SaliencyMap expects HxWx1, got {}", values.shape());
        debug_assert!(values.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        SaliencyMap { values }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn shape(&self) -> Shape {
        self.values.shape()
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values.at(y, x, 0)
    }

    pub fn min(&self) -> f64 {
        self.values.data().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.data().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.data().iter().sum::<f64>() / self.values.numel() as f64
    }

    /// Mean saliency over a weighting mask (HxWx1).
    pub fn masked_mean(&self, mask: &Tensor) -> f64 {
        assert_eq!(mask.shape(), self.values.shape(), "mask shape {} vs map {}", mask.shape(), self.values.shape());
        let num: f64 = self.values.data().iter().zip(mask.data()).map(|(s, m)| s * m).sum();
        let den: f64 = mask.data().iter().sum();
        assert!(den > 0.0, "masked_mean over an empty mask");
        num / den
    }

    /// (y, x) of the largest value; ties resolve to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for y in 0..self.values.height() {
            for x in 0..self.values.width() {
                let v = self.values.at(y, x, 0);
                if v > best_v {
                    best_v = v;
                    best = (y, x);
                }
            }
        }
        best
    }

    /// 8-bit grayscale serialization: value = round(255 * s), row-major.
    pub fn to_gray_bytes(&self) -> Vec<u8> {
        self.values.data().iter().map(|&v| (255.0 * v).round() as u8).collect()
    }
}

/// A differentiable saliency predictor S(.): records a prediction on the
/// tape so gradients flow from the map back to the input pixels.
pub trait SaliencyBackend: Send + Sync {
    /// Record the prediction for an HxWx3 image node; returns an HxWx1 node
    /// with values in [0, 1].
    fn predict_node(&self, g: &mut Graph, image: NodeId) -> NodeId;

    /// Eager convenience: run the prediction on a throwaway graph.
    fn predict(&self, image: &Tensor) -> SaliencyMap {
        let mut g = Graph::new();
        let node = g.input(image.clone());
        let out = self.predict_node(&mut g, node);
        SaliencyMap::new(g.value(out).clone())
    }
}

/// Center-surround contrast: |blur(f, sigma_c) - blur(f, sigma_s)|.
pub fn center_surround(g: &mut Graph, feature: NodeId, center_sigma: f64, surround_sigma: f64) -> NodeId {
    assert!(
        surround_sigma > center_sigma && center_sigma > 0.0,
        "center_surround requires surround_sigma > center_sigma > 0, got {center_sigma} and {surround_sigma}"
    );
    let c = g.gaussian_blur(feature, center_sigma);
    let s = g.gaussian_blur(feature, surround_sigma);
    let d = g.sub(c, s);
    g.abs(d)
}

/// The built-in classical predictor: opponent + oriented-gradient features
/// at three dyadic scales, center-surround contrast, gaze-density smoothing
/// and a fixed logistic squash into [0, 1].
#[derive(Debug, Clone)]
pub struct BuiltinSaliency {
    pub center_sigma: f64,
    pub surround_sigma: f64,
    /// Logistic squash midpoint over the raw conspicuity scale.
    pub squash_mu: f64,
    /// Logistic squash width.
    pub squash_s: f64,
}

/// Squash constants are calibrated once on the canonical red-disk pop-out
/// image (disk core above 0.7, background below 0.2) and then frozen; they
/// are configuration, not per-image statistics, so predictions stay local
/// and deterministic.
pub const SQUASH_MU: f64 = 0.12;
pub const SQUASH_S: f64 = 0.02;

impl Default for BuiltinSaliency {
    fn default() -> Self {
        BuiltinSaliency { center_sigma: 2.0, surround_sigma: 8.0, squash_mu: SQUASH_MU, squash_s: SQUASH_S }
    }
}

impl BuiltinSaliency {
    /// Oriented first-derivative magnitudes of a single-channel map, via
    /// half-pixel shifted sampling (clamped, so constants stay flat).
    fn gradient_magnitudes(&self, g: &mut Graph, feature: NodeId) -> (NodeId, NodeId) {
        let shape = g.shape(feature);
        let (h, w) = (shape.height, shape.width);
        let mut plus_x = Tensor::zeros(h, w, 2);
        let mut minus_x = Tensor::zeros(h, w, 2);
        let mut plus_y = Tensor::zeros(h, w, 2);
        let mut minus_y = Tensor::zeros(h, w, 2);
        for y in 0..h {
            for x in 0..w {
                plus_x.set(y, x, 0, y as f64);
                plus_x.set(y, x, 1, x as f64 + 0.5);
                minus_x.set(y, x, 0, y as f64);
                minus_x.set(y, x, 1, x as f64 - 0.5);
                plus_y.set(y, x, 0, y as f64 + 0.5);
                plus_y.set(y, x, 1, x as f64);
                minus_y.set(y, x, 0, y as f64 - 0.5);
                minus_y.set(y, x, 1, x as f64);
            }
        }
        let px = g.input(plus_x);
        let mx = g.input(minus_x);
        let py = g.input(plus_y);
        let my = g.input(minus_y);
        let sx_p = g.grid_sample(feature, px);
        let sx_m = g.grid_sample(feature, mx);
        let dx = g.sub(sx_p, sx_m);
        let gx = g.abs(dx);
        let sy_p = g.grid_sample(feature, py);
        let sy_m = g.grid_sample(feature, my);
        let dy = g.sub(sy_p, sy_m);
        let gy = g.abs(dy);
        (gx, gy)
    }
}

impl BuiltinSaliency {
    /// The smoothed conspicuity map before the logistic squash; exposed so
    /// the squash constants can be recalibrated against it.
    pub fn raw_node(&self, g: &mut Graph, image: NodeId) -> NodeId {
        let shape = g.shape(image);
        let (h, w) = (shape.height, shape.width);
        assert!(h >= 32 && w >= 32, "saliency prediction needs at least 32x32 input, got {shape}");
        assert_eq!(shape.channels, 3, "saliency prediction expects HxWx3, got {shape}");

        let (intensity, red_green, blue_yellow) = opponent_channels(g, image);
        let half = (h.div_ceil(2), w.div_ceil(2));
        let quarter = (half.0.div_ceil(2), half.1.div_ceil(2));
        let mut maps: Vec<NodeId> = Vec::new();
        for (sh, sw) in [(h, w), half, quarter] {
            let int_s = g.resample_bilinear(intensity, sh, sw);
            let rg_s = g.resample_bilinear(red_green, sh, sw);
            let by_s = g.resample_bilinear(blue_yellow, sh, sw);
            let (gx, gy) = self.gradient_magnitudes(g, int_s);
            for feat in [int_s, rg_s, by_s, gx, gy] {
                let cs = center_surround(g, feat, self.center_sigma, self.surround_sigma);
                maps.push(g.resample_bilinear(cs, h, w));
            }
        }
        let mut acc = maps[0];
        for &m in &maps[1..] {
            acc = g.add(acc, m);
        }
        let conspicuity = g.scale(acc, 1.0 / maps.len() as f64);
        g.gaussian_blur(conspicuity, 0.04 * h.min(w) as f64)
    }
}

impl SaliencyBackend for BuiltinSaliency {
    fn predict_node(&self, g: &mut Graph, image: NodeId) -> NodeId {
        let raw = self.raw_node(g, image);
        g.affine_logistic(raw, self.squash_mu, self.squash_s)
    }
}

/// A helper on Graph for the squash: logistic((x - mu) / s).
trait SquashExt {
    fn affine_logistic(&mut self, x: NodeId, mu: f64, s: f64) -> NodeId;
}

impl SquashExt for Graph {
    fn affine_logistic(&mut self, x: NodeId, mu: f64, s: f64) -> NodeId {
        let z = self.affine(x, 1.0 / s, -mu / s);
        self.logistic(z)
    }
}

static REGISTRY: OnceLock<RwLock<(u64, Arc<dyn SaliencyBackend>)>> = OnceLock::new();

fn registry() -> &'static RwLock<(u64, Arc<dyn SaliencyBackend>)> {
    REGISTRY.get_or_init(|| RwLock::new((0, Arc::new(BuiltinSaliency::default()))))
}

/// Handle for a registered backend (its registration generation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendHandle(pub u64);

/// Install a backend process-wide; later objective evaluations that use the
/// active backend go through it.
pub fn register_backend(backend: Arc<dyn SaliencyBackend>) -> BackendHandle {
    let mut guard = registry().write().expect("backend registry poisoned");
    guard.0 += 1;
    guard.1 = backend;
    BackendHandle(guard.0)
}

/// The currently registered backend (built-in by default).
pub fn active_backend() -> Arc<dyn SaliencyBackend> {
    registry().read().expect("backend registry poisoned").1.clone()
}

/// Predict with the built-in backend (the common eager entry point).
pub fn predict_saliency(image: &Tensor) -> SaliencyMap {
    BuiltinSaliency::default().predict(image)
}
