//! The two-term masked objective and its optimization loop: drive the
//! saliency inside a region toward a target map while out-of-region pixels
//! stay close to the input, with a smoothness penalty on grid-shaped
//! operator parameters.

mod adam;
mod trace;

use thiserror::Error;

use crate::colorvision::{active_backend, SaliencyBackend};
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::operators::{
    convnet_forward_node, convnet_pretrain, mask_to_rgb, noise_apply_node, recolor_apply_node,
    warp_commit, warp_densify_node, warp_sample_node, ComposedWarp, ConvNetParams, NoiseParams,
    OperatorKind, OperatorParams, RecolorGrid, WarpField, DEFAULT_BINS,
    DEFAULT_SPACING, PRETRAIN_ITERS,
};

pub use adam::{Adam, AdamError};
pub use trace::{Trace, TraceRow};

/// Desired saliency inside the mask: a constant level or a full map.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMap {
    Constant(f64),
    Map(Tensor),
}

impl Default for TargetMap {
    fn default() -> Self {
        TargetMap::Constant(0.0)
    }
}

impl TargetMap {
    fn materialize(&self, h: usize, w: usize) -> Tensor {
        match self {
            TargetMap::Constant(v) => {
                assert!((0.0..=1.0).contains(v), "target constant must lie in [0,1], got {v}");
                Tensor::filled(h, w, 1, *v)
            }
            TargetMap::Map(t) => {
                assert_eq!(
                    (t.height(), t.width(), t.channels()),
                    (h, w, 1),
                    "target map must be {h}x{w}x1, got {}",
                    t.shape()
                );
                t.clone()
            }
        }
    }
}

/// Region of interest; soft values in [0,1] are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    values: Tensor,
}

impl Mask {
    pub fn new(values: Tensor) -> Self {
        assert_eq!(values.channels(), 1, "mask must be HxWx1, got {}", values.shape());
        assert!(
            values.data().iter().all(|&v| (0.0..=1.0).contains(&v)),
            "mask values must lie in [0,1]"
        );
        Mask { values }
    }

    /// Binarize a grayscale map at a threshold (values >= threshold are 1).
    pub fn binarize(gray: &Tensor, threshold: f64) -> Self {
        assert_eq!(gray.channels(), 1);
        Mask { values: gray.map(|v| if v >= threshold { 1.0 } else { 0.0 }) }
    }

    /// Soften edges with a small Gaussian blur.
    pub fn feather(&self, sigma: f64) -> Self {
        let kernel = crate::diffcore::kernels::gaussian_kernel(sigma);
        let blurred = crate::diffcore::kernels::gaussian_blur_forward(&self.values, &kernel);
        Mask { values: blurred.map(|v| v.clamp(0.0, 1.0)) }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        !self.values.data().iter().any(|&v| v > 0.0)
    }

    pub fn coverage(&self) -> f64 {
        self.values.data().iter().sum::<f64>() / self.values.numel() as f64
    }
}

/// Weights, step sizes and budget of one optimization run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub operator: OperatorKind,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    pub target: TargetMap,
}

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_GAMMA: f64 = 1e-4;
pub const DEFAULT_LR: f64 = 0.02;
pub const DEFAULT_LR_CONVNET: f64 = 0.001;
pub const DEFAULT_ITERS: usize = 500;

impl RunConfig {
    pub fn defaults(operator: OperatorKind) -> Self {
        RunConfig {
            operator,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            lr: if operator == OperatorKind::Convnet { DEFAULT_LR_CONVNET } else { DEFAULT_LR },
            iters: DEFAULT_ITERS,
            seed: 0,
            target: TargetMap::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask size {mask} does not match image size {image}")]
    MaskMismatch { mask: String, image: String },
    #[error("image must be HxWx3 RGB, got {0}")]
    NotRgb(String),
    #[error("image {0} is smaller than the 32px minimum")]
    TooSmall(String),
    #[error("operator '{0}' is not differentiable; it cannot be optimized")]
    NotDifferentiable(OperatorKind),
    #[error("beta and gamma must be nonnegative")]
    NegativeWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// Optimization hit nonfinite values; the best iterate so far stands.
    Aborted { iter: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub edited: Tensor,
    pub params: OperatorParams,
    pub trace: Trace,
    pub outcome: RunOutcome,
    /// Trace row index of the returned (lowest-total) iterate.
    pub best_iter: usize,
}

impl RunResult {
    /// Mean in-mask saliency of the returned iterate.
    pub fn achieved_saliency(&self) -> f64 {
        self.trace.rows().get(self.best_iter).map_or(f64::NAN, |r| r.mask_mean_saliency)
    }
}

/// Masked saliency loss: mean over all pixels of (M o (S - T))^2.
pub fn loss_sal_node(g: &mut Graph, sal: NodeId, target: NodeId, mask1: NodeId) -> NodeId {
    let diff = g.sub(sal, target);
    let gated = g.mul(mask1, diff);
    let sq = g.square(gated);
    g.reduce_mean(sq, None)
}

/// Similarity loss: mean over all pixels and channels of ((1-M) o (E - I))^2.
pub fn loss_sim_node(g: &mut Graph, edited: NodeId, original: NodeId, inv_mask3: NodeId) -> NodeId {
    let diff = g.sub(edited, original);
    let gated = g.mul(inv_mask3, diff);
    let sq = g.square(gated);
    g.reduce_mean(sq, None)
}

/// Operator state mutated across iterations of one run.
enum OpState {
    Recolor { grid: RecolorGrid },
    Warp { field: WarpField, composed: ComposedWarp },
    Convnet { params: ConvNetParams },
    Noise { delta: NoiseParams },
}

impl OpState {
    fn init(op: OperatorKind, h: usize, w: usize, seed: u64) -> OpState {
        match op {
            OperatorKind::Recolor => OpState::Recolor { grid: RecolorGrid::identity(DEFAULT_BINS) },
            OperatorKind::Warp => OpState::Warp {
                field: WarpField::zero(h, w, DEFAULT_SPACING),
                composed: ComposedWarp::identity(h, w),
            },
            OperatorKind::Convnet => OpState::Convnet { params: ConvNetParams::random(seed) },
            OperatorKind::Noise => OpState::Noise { delta: NoiseParams::zero(h, w) },
            OperatorKind::Baseline => unreachable!("baseline is rejected before state init"),
        }
    }

    /// Record the edit; returns (edited node, parameter nodes, optional TV node).
    fn build(&self, g: &mut Graph, image: NodeId, mask3: NodeId) -> (NodeId, Vec<NodeId>, Option<NodeId>) {
        match self {
            OpState::Recolor { grid } => {
                let theta = g.param(grid.theta().clone());
                let edited = recolor_apply_node(g, image, theta);
                let tv = g.tv_grid(theta);
                (edited, vec![theta], Some(tv))
            }
            OpState::Warp { field, .. } => {
                let shape = g.shape(image);
                let control = g.param(field.control().clone());
                let dense = warp_densify_node(g, control, shape.height, shape.width);
                let edited = warp_sample_node(g, image, dense);
                let tv = g.tv_grid(control);
                (edited, vec![control], Some(tv))
            }
            OpState::Convnet { params } => {
                let nodes: Vec<NodeId> = params.tensors().into_iter().map(|t| g.param(t.clone())).collect();
                let edited = convnet_forward_node(g, image, &nodes);
                (edited, nodes, None)
            }
            OpState::Noise { delta } => {
                let d = g.param(delta.delta().clone());
                let edited = noise_apply_node(g, image, d, mask3);
                (edited, vec![d], None)
            }
        }
    }

    fn write_back(&mut self, values: &[Tensor]) {
        match self {
            OpState::Recolor { grid } => *grid.theta_mut() = values[0].clone(),
            OpState::Warp { field, .. } => *field.control_mut() = values[0].clone(),
            OpState::Convnet { params } => {
                for (dst, src) in params.tensors_mut().into_iter().zip(values) {
                    *dst = src.clone();
                }
            }
            OpState::Noise { delta } => *delta.delta_mut() = values[0].clone(),
        }
    }

    fn param_values(&self) -> Vec<Tensor> {
        match self {
            OpState::Recolor { grid } => vec![grid.theta().clone()],
            OpState::Warp { field, .. } => vec![field.control().clone()],
            OpState::Convnet { params } => params.tensors().into_iter().cloned().collect(),
            OpState::Noise { delta } => vec![delta.delta().clone()],
        }
    }

    /// Freeze the current state into re-applicable parameters.
    fn snapshot(&self, mask: &Mask) -> OperatorParams {
        match self {
            OpState::Recolor { grid } => OperatorParams::Recolor(grid.clone()),
            OpState::Warp { composed, .. } => OperatorParams::Warp(composed.clone()),
            OpState::Convnet { params } => OperatorParams::Convnet(params.clone()),
            OpState::Noise { delta } => {
                OperatorParams::Noise(NoiseParams::from_delta(delta.masked(mask.values())))
            }
        }
    }
}

fn validate(image: &Tensor, mask: &Mask, cfg: &RunConfig) -> Result<(), RunError> {
    if image.channels() != 3 {
        return Err(RunError::NotRgb(image.shape().to_string()));
    }
    if image.height() < 32 || image.width() < 32 {
        return Err(RunError::TooSmall(image.shape().to_string()));
    }
    if (mask.values().height(), mask.values().width()) != (image.height(), image.width()) {
        return Err(RunError::MaskMismatch {
            mask: mask.values().shape().to_string(),
            image: image.shape().to_string(),
        });
    }
    if mask.is_empty() {
        return Err(RunError::EmptyMask);
    }
    if !cfg.operator.is_differentiable() {
        return Err(RunError::NotDifferentiable(cfg.operator));
    }
    if cfg.beta < 0.0 || cfg.gamma < 0.0 {
        return Err(RunError::NegativeWeight);
    }
    Ok(())
}

/// Optimize with the process-wide registered backend.
pub fn optimize(image: &Tensor, mask: &Mask, cfg: &RunConfig) -> Result<RunResult, RunError> {
    optimize_with_backend(image, mask, cfg, active_backend().as_ref())
}

/// Gradient-descent loop: evaluate the objective, backpropagate, step Adam,
/// and (for the warp) commit the incremental displacement each iteration.
/// Returns the iterate with the lowest total objective.
pub fn optimize_with_backend(
    image: &Tensor,
    mask: &Mask,
    cfg: &RunConfig,
    backend: &dyn SaliencyBackend,
) -> Result<RunResult, RunError> {
    validate(image, mask, cfg)?;
    let (h, w) = (image.height(), image.width());
    let mut state = OpState::init(cfg.operator, h, w, cfg.seed);
    let mut current = image.clone();
    let mut trace = Trace::new();
    let mut adam = Adam::new(cfg.lr);

    // reconstruction-only warmup for the learned operator
    if let OpState::Convnet { params } = &mut state {
        if convnet_pretrain(&current, params, PRETRAIN_ITERS).is_err() {
            return Ok(RunResult {
                edited: image.clone(),
                params: state.snapshot(mask),
                trace,
                outcome: RunOutcome::Aborted { iter: 0, reason: "pretraining diverged".into() },
                best_iter: 0,
            });
        }
    }

    let mask1 = mask.values().clone();
    let mask3 = mask_to_rgb(&mask1);
    let inv_mask3 = mask3.map(|v| 1.0 - v);
    let target = cfg.target.materialize(h, w);

    let mut best: Option<(f64, Tensor, OperatorParams, usize)> = None;
    let mut outcome = RunOutcome::Completed;

    for iter in 0..=cfg.iters {
        let mut g = Graph::new();
        let img_node = g.input(current.clone());
        let mask1_node = g.input(mask1.clone());
        let mask3_node = g.input(mask3.clone());
        let inv3_node = g.input(inv_mask3.clone());
        let target_node = g.input(target.clone());
        let (edited, param_nodes, tv_node) = state.build(&mut g, img_node, mask3_node);
        let sal = backend.predict_node(&mut g, edited);
        let l_sal = loss_sal_node(&mut g, sal, target_node, mask1_node);
        let l_sim = loss_sim_node(&mut g, edited, img_node, inv3_node);
        let sim_scaled = g.scale(l_sim, cfg.beta);
        let mut total = g.add(l_sal, sim_scaled);
        let tv_value = match tv_node {
            Some(tv) => {
                let tv_scaled = g.scale(tv, cfg.gamma);
                total = g.add(total, tv_scaled);
                g.value(tv).scalar_value()
            }
            None => 0.0,
        };
        let mask_mean = g.reduce_mean(sal, Some(mask1_node));

        let total_value = g.value(total).scalar_value();
        if !total_value.is_finite() {
            outcome = RunOutcome::Aborted { iter, reason: "nonfinite objective".into() };
            break;
        }
        trace.push(TraceRow {
            iter,
            loss_sal: g.value(l_sal).scalar_value(),
            loss_sim: g.value(l_sim).scalar_value(),
            tv: tv_value,
            total: total_value,
            mask_mean_saliency: g.value(mask_mean).scalar_value(),
        });
        if best.as_ref().is_none_or(|(b, _, _, _)| total_value < *b) {
            best = Some((total_value, g.value(edited).clone(), state.snapshot(mask), iter));
        }
        if iter == cfg.iters {
            break;
        }

        if let Err(e) = g.backward(total) {
            outcome = RunOutcome::Aborted { iter, reason: e.to_string() };
            break;
        }
        let grads: Vec<Option<Tensor>> = param_nodes.iter().map(|&n| g.grad(n)).collect();
        drop(g);
        let mut values = state.param_values();
        {
            let mut refs: Vec<&mut Tensor> = values.iter_mut().collect();
            if let Err(e) = adam.step(&mut refs, &grads) {
                outcome = RunOutcome::Aborted { iter, reason: e.to_string() };
                break;
            }
        }
        state.write_back(&values);
        if let OpState::Warp { field, composed } = &mut state {
            warp_commit(&mut current, field, composed);
        }
    }

    let (_, edited, params, best_iter) = best.expect("at least iteration 0 is always evaluated");
    Ok(RunResult { edited, params, trace, outcome, best_iter })
}
