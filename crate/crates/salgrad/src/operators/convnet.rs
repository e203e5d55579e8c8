//! A small image-to-image convolutional network used as a learned editing
//! operator: five 3x3 same-padding layers, ReLU after the first four, a
//! linear final layer. Weights start as small seeded noise and are first
//! trained to reproduce the input before any saliency objective applies.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::diffcore::{Graph, GraphError, NodeId, Tensor};
use crate::objective::Adam;

/// Channel plan through the five layers.
pub const CHANNEL_PLAN: [usize; 6] = [3, 16, 32, 32, 16, 3];

/// Kernel size of every layer.
pub const KERNEL_SIZE: usize = 3;

/// Weight initialization scale.
pub const INIT_STD: f64 = 0.05;

/// Reconstruction-only iterations before the saliency objective is added.
pub const PRETRAIN_ITERS: usize = 50;

/// Learning rate of the reconstruction pretraining phase.
pub const PRETRAIN_LR: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// (k, k, cin*cout) with channel index ci*cout + co.
    pub kernels: Tensor,
    /// (1, 1, cout).
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetParams {
    layers: Vec<ConvLayer>,
}

impl ConvNetParams {
    /// Fresh seeded Gaussian weights (std 0.05), zero biases.
    pub fn random(seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut gauss = move || {
            // Box-Muller on two uniforms
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let layers = CHANNEL_PLAN
            .windows(2)
            .map(|io| {
                let (cin, cout) = (io[0], io[1]);
                let mut kernels = Tensor::zeros(KERNEL_SIZE, KERNEL_SIZE, cin * cout);
                for v in kernels.data_mut() {
                    *v = INIT_STD * gauss();
                }
                ConvLayer { kernels, bias: Tensor::zeros(1, 1, cout) }
            })
            .collect();
        ConvNetParams { layers }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn from_layers(layers: Vec<ConvLayer>) -> Self {
        assert_eq!(layers.len(), CHANNEL_PLAN.len() - 1, "expected exactly 5 conv layers");
        ConvNetParams { layers }
    }

    /// Flat list of parameter tensors, kernels and bias per layer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.kernels, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.kernels, &mut l.bias]).collect()
    }
}

/// Record the forward pass; `param_nodes` are the 10 tensors in
/// `ConvNetParams::tensors` order.
pub fn convnet_forward_node(g: &mut Graph, image: NodeId, param_nodes: &[NodeId]) -> NodeId {
    assert_eq!(param_nodes.len(), 10, "expected 10 parameter nodes (5 kernel + 5 bias)");
    let mut x = image;
    for (layer, pair) in param_nodes.chunks_exact(2).enumerate() {
        x = g.conv2d(x, pair[0], pair[1]);
        if layer + 1 < CHANNEL_PLAN.len() - 1 {
            x = g.relu(x);
        }
    }
    x
}

/// Eager forward pass.
pub fn convnet_forward(image: &Tensor, params: &ConvNetParams) -> Tensor {
    let mut g = Graph::new();
    let img = g.input(image.clone());
    let nodes: Vec<NodeId> = params.tensors().into_iter().map(|t| g.input(t.clone())).collect();
    let out = convnet_forward_node(&mut g, img, &nodes);
    g.value(out).clone()
}

/// Train the network to reconstruct `image` (identity mapping) for `iters`
/// Adam steps on mean squared error. Returns the per-iteration losses.
pub fn convnet_pretrain(
    image: &Tensor,
    params: &mut ConvNetParams,
    iters: usize,
) -> Result<Vec<f64>, GraphError> {
    let mut adam = Adam::new(PRETRAIN_LR);
    let mut losses = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut g = Graph::new();
        let img = g.input(image.clone());
        let nodes: Vec<NodeId> = params.tensors().into_iter().map(|t| g.param(t.clone())).collect();
        let out = convnet_forward_node(&mut g, img, &nodes);
        let diff = g.sub(out, img);
        let sq = g.square(diff);
        let loss = g.reduce_mean(sq, None);
        losses.push(g.value(loss).scalar_value());
        g.backward(loss)?;
        let grads: Vec<Option<Tensor>> = nodes.iter().map(|&n| g.grad(n)).collect();
        let mut tensors = params.tensors_mut();
        adam.step(&mut tensors, &grads).map_err(|_| GraphError::NonFinite { node: 0, op: "adam" })?;
    }
    Ok(losses)
}

/// Peak signal-to-noise ratio between two [0,1]-scaled images, in dB.
pub fn psnr(a: &Tensor, b: &Tensor) -> f64 {
    let mse = a.mse(b);
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
