//! Fixed-tape reverse-mode differentiation over image tensors.
//!
//! The forward pass records every primitive application in order; backward
//! replays the tape in exact reverse, accumulating gradients into each
//! node that asked for them. One backward pass from a scalar loss yields
//! the gradient of that loss with respect to every parameter leaf.

use thiserror::Error;

use super::colorops;
use super::kernels;
use super::tensor::{Shape, Tensor};

/// Handle to a recorded tensor on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Square,
    Abs,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary { kind: BinaryKind, a: NodeId, b: NodeId },
    Unary { kind: UnaryKind, a: NodeId },
    /// out = a * mul + add, elementwise with scalar constants.
    Affine { a: NodeId, mul: f64 },
    ChannelExtract { a: NodeId, channel: usize },
    Conv2d { input: NodeId, kernels: NodeId, bias: NodeId, k: usize, cin: usize, cout: usize },
    GaussianBlur { input: NodeId, kernel: Vec<f64> },
    Resample { input: NodeId },
    GridSample { input: NodeId, coords: NodeId },
    Reduce { kind: ReduceKind, input: NodeId, weights: Option<NodeId> },
    RgbToLab { input: NodeId },
    LabToRgb { input: NodeId },
    /// Bilateral-style chroma-grid lookup + affine application; L passes through.
    RecolorSlice { lab: NodeId, grid: NodeId, chroma_min: f64, chroma_max: f64 },
    /// L1 norm of forward differences along the first two grid axes.
    TvGrid { input: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Binary { kind: BinaryKind::Add, .. } => "add",
            Op::Binary { kind: BinaryKind::Sub, .. } => "sub",
            Op::Binary { kind: BinaryKind::Mul, .. } => "mul",
            Op::Unary { kind: UnaryKind::Relu, .. } => "relu",
            Op::Unary { kind: UnaryKind::Square, .. } => "square",
            Op::Unary { kind: UnaryKind::Abs, .. } => "abs",
            Op::Unary { kind: UnaryKind::Logistic, .. } => "logistic",
            Op::Affine { .. } => "affine",
            Op::ChannelExtract { .. } => "channel_extract",
            Op::Conv2d { .. } => "conv2d",
            Op::GaussianBlur { .. } => "gaussian_blur",
            Op::Resample { .. } => "resample_bilinear",
            Op::GridSample { .. } => "grid_sample",
            Op::Reduce { .. } => "reduce",
            Op::RgbToLab { .. } => "rgb_to_lab",
            Op::LabToRgb { .. } => "lab_to_rgb",
            Op::RecolorSlice { .. } => "recolor_slice",
            Op::TvGrid { .. } => "tv_grid",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("backward requires a scalar loss, found shape {0}")]
    LossNotScalar(String),
    #[error("graph contains nonfinite values (node {node}, op {op})")]
    NonFinite { node: usize, op: &'static str },
}

/// The recording tape. Build it forward, then call [`Graph::backward`] once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    first_nonfinite: Option<(usize, &'static str)>,
    clamp_warnings: u64,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Count of out-of-range inputs clamped by rgb_to_lab so far.
    pub fn clamp_warnings(&self) -> u64 {
        self.clamp_warnings
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient accumulated for a node by the last backward pass.
    pub fn grad(&self, id: NodeId) -> Option<Tensor> {
        self.grads
            .get(id.0)
            .and_then(|g| g.as_ref())
            .map(|g| Tensor::new(self.nodes[id.0].value.shape(), g.clone()))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        if self.first_nonfinite.is_none() && !value.all_finite() {
            self.first_nonfinite = Some((self.nodes.len(), op.name()));
        }
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    /// Record a constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Record an optimization variable; backward will produce its gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    fn binary(&mut self, kind: BinaryKind, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(
            sa,
            sb,
            "{} requires matching shapes, got {sa} vs {sb}",
            match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            }
        );
        let (da, db) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let data = match kind {
            BinaryKind::Add => da.iter().zip(db).map(|(x, y)| x + y).collect(),
            BinaryKind::Sub => da.iter().zip(db).map(|(x, y)| x - y).collect(),
            BinaryKind::Mul => da.iter().zip(db).map(|(x, y)| x * y).collect(),
        };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(Tensor::new(sa, data), Op::Binary { kind, a, b }, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(BinaryKind::Mul, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: NodeId) -> NodeId {
        let value = match kind {
            UnaryKind::Relu => self.nodes[a.0].value.map(|v| v.max(0.0)),
            UnaryKind::Square => self.nodes[a.0].value.map(|v| v * v),
            UnaryKind::Abs => self.nodes[a.0].value.map(f64::abs),
            UnaryKind::Logistic => self.nodes[a.0].value.map(|v| 1.0 / (1.0 + (-v).exp())),
        };
        let rg = self.requires_grad(a);
        self.push(value, Op::Unary { kind, a }, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Square, a)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Abs, a)
    }

    pub fn logistic(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Logistic, a)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.affine(a, factor, 0.0)
    }

    /// Elementwise a * mul + add with scalar constants.
    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let value = self.nodes[a.0].value.map(|v| v * mul + add);
        let rg = self.requires_grad(a);
        self.push(value, Op::Affine { a, mul }, rg)
    }

    pub fn channel(&mut self, a: NodeId, channel: usize) -> NodeId {
        let src = &self.nodes[a.0].value;
        let shape = src.shape();
        assert!(channel < shape.channels, "channel {channel} out of range for {shape}");
        let mut data = Vec::with_capacity(shape.height * shape.width);
        for p in 0..shape.height * shape.width {
            data.push(src.data()[p * shape.channels + channel]);
        }
        let rg = self.requires_grad(a);
        self.push(
            Tensor::new(Shape::new(shape.height, shape.width, 1), data),
            Op::ChannelExtract { a, channel },
            rg,
        )
    }

    /// Same-padding stride-1 convolution. `kernels` is (k, k, cin*cout) with
    /// channel index ci*cout + co; `bias` is (1, 1, cout).
    pub fn conv2d(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> NodeId {
        assert!(input != kernels && input != bias && kernels != bias, "conv2d arguments must be distinct nodes");
        let in_shape = self.shape(input);
        let k_shape = self.shape(kernels);
        let b_shape = self.shape(bias);
        let k = k_shape.height;
        assert_eq!(k % 2, 1, "conv2d kernel size must be odd, got {k}");
        assert_eq!(k_shape.width, k, "conv2d kernels must be square, got {k_shape}");
        let cout = b_shape.channels;
        let cin = in_shape.channels;
        assert_eq!(
            k_shape.channels,
            cin * cout,
            "conv2d channel mismatch: input {in_shape} with kernels {k_shape} and bias {b_shape}"
        );
        let value = kernels::conv2d_forward(
            &self.nodes[input.0].value,
            &self.nodes[kernels.0].value,
            &self.nodes[bias.0].value,
            k,
            cin,
            cout,
        );
        let rg = self.requires_grad(input) || self.requires_grad(kernels) || self.requires_grad(bias);
        self.push(value, Op::Conv2d { input, kernels, bias, k, cin, cout }, rg)
    }

    pub fn gaussian_blur(&mut self, input: NodeId, sigma: f64) -> NodeId {
        let kernel = kernels::gaussian_kernel(sigma);
        let value = kernels::gaussian_blur_forward(&self.nodes[input.0].value, &kernel);
        let rg = self.requires_grad(input);
        self.push(value, Op::GaussianBlur { input, kernel }, rg)
    }

    /// Align-corners bilinear resampling to (out_h, out_w).
    pub fn resample_bilinear(&mut self, input: NodeId, out_h: usize, out_w: usize) -> NodeId {
        let value = kernels::resample_bilinear_forward(&self.nodes[input.0].value, out_h, out_w);
        let rg = self.requires_grad(input);
        self.push(value, Op::Resample { input }, rg)
    }

    /// Sample `input` at per-pixel (y, x) locations given in pixel units;
    /// out-of-range locations clamp to the edge.
    pub fn grid_sample(&mut self, input: NodeId, coords: NodeId) -> NodeId {
        assert!(input != coords, "grid_sample arguments must be distinct nodes");
        let c_shape = self.shape(coords);
        assert_eq!(c_shape.channels, 2, "grid_sample coords must be HxWx2, got {c_shape}");
        let value = kernels::grid_sample_forward(&self.nodes[input.0].value, &self.nodes[coords.0].value);
        let rg = self.requires_grad(input) || self.requires_grad(coords);
        self.push(value, Op::GridSample { input, coords }, rg)
    }

    pub fn reduce_sum(&mut self, input: NodeId, weights: Option<NodeId>) -> NodeId {
        self.reduce(ReduceKind::Sum, input, weights)
    }

    pub fn reduce_mean(&mut self, input: NodeId, weights: Option<NodeId>) -> NodeId {
        self.reduce(ReduceKind::Mean, input, weights)
    }

    fn reduce(&mut self, kind: ReduceKind, input: NodeId, weights: Option<NodeId>) -> NodeId {
        let shape = self.shape(input);
        if let Some(w) = weights {
            let ws = self.shape(w);
            assert_eq!(shape, ws, "reduce weights must match input shape, got {shape} vs {ws}");
            assert!(
                !self.requires_grad(w),
                "reduce weights are treated as constants; differentiable weights are not supported"
            );
        }
        let data = self.nodes[input.0].value.data();
        let (total, denom) = match weights {
            Some(w) => {
                let wd = self.nodes[w.0].value.data();
                let s: f64 = data.iter().zip(wd).map(|(x, w)| x * w).sum();
                (s, wd.iter().sum::<f64>())
            }
            None => (data.iter().sum::<f64>(), shape.numel() as f64),
        };
        let value = match kind {
            ReduceKind::Sum => total,
            ReduceKind::Mean => {
                assert!(denom != 0.0, "reduce mean with zero total weight");
                total / denom
            }
        };
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(value), Op::Reduce { kind, input, weights }, rg)
    }

    /// Differentiable sRGB -> CIELab (D65). Inputs outside [0,1] are clamped
    /// and counted in [`Graph::clamp_warnings`].
    pub fn rgb_to_lab(&mut self, input: NodeId) -> NodeId {
        let src = &self.nodes[input.0].value;
        let shape = src.shape();
        assert_eq!(shape.channels, 3, "rgb_to_lab expects HxWx3, got {shape}");
        let mut data = Vec::with_capacity(shape.numel());
        let mut clamped = 0u64;
        for p in src.data().chunks_exact(3) {
            let mut pix = [p[0], p[1], p[2]];
            for v in &mut pix {
                if *v < 0.0 || *v > 1.0 {
                    clamped += 1;
                    *v = v.clamp(0.0, 1.0);
                }
            }
            data.extend_from_slice(&colorops::srgb_to_lab(pix));
        }
        self.clamp_warnings += clamped;
        let rg = self.requires_grad(input);
        self.push(Tensor::new(shape, data), Op::RgbToLab { input }, rg)
    }

    /// Differentiable CIELab -> sRGB; out-of-gamut outputs are not clamped.
    pub fn lab_to_rgb(&mut self, input: NodeId) -> NodeId {
        let src = &self.nodes[input.0].value;
        let shape = src.shape();
        assert_eq!(shape.channels, 3, "lab_to_rgb expects HxWx3, got {shape}");
        let mut data = Vec::with_capacity(shape.numel());
        for p in src.data().chunks_exact(3) {
            data.extend_from_slice(&colorops::lab_to_srgb([p[0], p[1], p[2]]));
        }
        let rg = self.requires_grad(input);
        self.push(Tensor::new(shape, data), Op::LabToRgb { input }, rg)
    }

    /// Apply a BxBx6 chroma-grid of affine transforms to a Lab image.
    ///
    /// Each pixel's (a, b) selects a cell of the grid; the four surrounding
    /// cell vectors are blended with bilinear weights and decoded as a 2x2
    /// matrix (row-major) plus translation: (a', b') = (a, b) A + t.
    /// Lightness passes through untouched.
    pub fn recolor_slice(&mut self, lab: NodeId, grid: NodeId, chroma_min: f64, chroma_max: f64) -> NodeId {
        assert!(lab != grid, "recolor_slice arguments must be distinct nodes");
        let lab_shape = self.shape(lab);
        let grid_shape = self.shape(grid);
        assert_eq!(lab_shape.channels, 3, "recolor_slice expects Lab HxWx3, got {lab_shape}");
        assert_eq!(grid_shape.channels, 6, "recolor grid must be BxBx6, got {grid_shape}");
        assert_eq!(grid_shape.height, grid_shape.width, "recolor grid must be square, got {grid_shape}");
        assert!(grid_shape.height >= 2, "recolor grid needs at least 2 cells per axis");
        let bins = grid_shape.height;
        let lab_t = &self.nodes[lab.0].value;
        let grid_t = &self.nodes[grid.0].value;
        let mut data = Vec::with_capacity(lab_shape.numel());
        for p in lab_t.data().chunks_exact(3) {
            let (l, a, b) = (p[0], p[1], p[2]);
            let t = slice_lookup(grid_t.data(), bins, chroma_min, chroma_max, a, b).0;
            data.push(l);
            data.push(a * t[0] + b * t[2] + t[4]);
            data.push(a * t[1] + b * t[3] + t[5]);
        }
        let rg = self.requires_grad(lab) || self.requires_grad(grid);
        self.push(Tensor::new(lab_shape, data), Op::RecolorSlice { lab, grid, chroma_min, chroma_max }, rg)
    }

    /// Isotropic total variation of a parameter grid: sum of |forward
    /// difference| along both grid axes, over all components.
    pub fn tv_grid(&mut self, input: NodeId) -> NodeId {
        let shape = self.shape(input);
        assert!(
            shape.height >= 2 && shape.width >= 2,
            "tv_grid needs at least 2 cells per axis, got {shape}"
        );
        let d = self.nodes[input.0].value.data();
        let (h, w, c) = (shape.height, shape.width, shape.channels);
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = d[(y * w + x) * c + ch];
                    if y + 1 < h {
                        total += (d[((y + 1) * w + x) * c + ch] - v).abs();
                    }
                    if x + 1 < w {
                        total += (d[(y * w + x + 1) * c + ch] - v).abs();
                    }
                }
            }
        }
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(total), Op::TvGrid { input }, rg)
    }

    /// Reverse pass from a scalar loss node. Every `requires_grad` node on a
    /// path to the loss receives its accumulated gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GraphError> {
        if let Some((node, op)) = self.first_nonfinite {
            return Err(GraphError::NonFinite { node, op });
        }
        let loss_shape = self.shape(loss);
        if !loss_shape.is_scalar() {
            return Err(GraphError::LossNotScalar(loss_shape.to_string()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else { continue };
            propagate(&self.nodes, &mut self.grads, i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }
}

fn ensure(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: NodeId) {
    if grads[id.0].is_none() {
        grads[id.0] = Some(vec![0.0; nodes[id.0].value.numel()]);
    }
}

/// Run `f` with the grad buffer of `id` temporarily taken out of the store,
/// so node values stay borrowable while the buffer is written.
fn with_grad<F>(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: NodeId, f: F)
where
    F: FnOnce(&mut [f64]),
{
    ensure(nodes, grads, id);
    let mut buf = grads[id.0].take().expect("grad buffer just ensured");
    f(&mut buf);
    grads[id.0] = Some(buf);
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], i: usize, gout: &[f64]) {
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (a, b, kind) = (*a, *b, *kind);
            if nodes[a.0].requires_grad {
                with_grad(nodes, grads, a, |ga| match kind {
                    BinaryKind::Add | BinaryKind::Sub => {
                        for (g, &go) in ga.iter_mut().zip(gout) {
                            *g += go;
                        }
                    }
                    BinaryKind::Mul => {
                        for ((g, &go), &bv) in ga.iter_mut().zip(gout).zip(nodes[b.0].value.data()) {
                            *g += go * bv;
                        }
                    }
                });
            }
            if nodes[b.0].requires_grad {
                with_grad(nodes, grads, b, |gb| match kind {
                    BinaryKind::Add => {
                        for (g, &go) in gb.iter_mut().zip(gout) {
                            *g += go;
                        }
                    }
                    BinaryKind::Sub => {
                        for (g, &go) in gb.iter_mut().zip(gout) {
                            *g -= go;
                        }
                    }
                    BinaryKind::Mul => {
                        for ((g, &go), &av) in gb.iter_mut().zip(gout).zip(nodes[a.0].value.data()) {
                            *g += go * av;
                        }
                    }
                });
            }
        }
        Op::Unary { kind, a } => {
            let (a, kind) = (*a, *kind);
            if !nodes[a.0].requires_grad {
                return;
            }
            with_grad(nodes, grads, a, |ga| {
                let adata = nodes[a.0].value.data();
                match kind {
                    UnaryKind::Relu => {
                        for ((g, &go), &x) in ga.iter_mut().zip(gout).zip(adata) {
                            if x > 0.0 {
                                *g += go;
                            }
                        }
                    }
                    UnaryKind::Square => {
                        for ((g, &go), &x) in ga.iter_mut().zip(gout).zip(adata) {
                            *g += 2.0 * x * go;
                        }
                    }
                    UnaryKind::Abs => {
                        for ((g, &go), &x) in ga.iter_mut().zip(gout).zip(adata) {
                            *g += go * sign(x);
                        }
                    }
                    UnaryKind::Logistic => {
                        for ((g, &go), &x) in ga.iter_mut().zip(gout).zip(adata) {
                            let s = 1.0 / (1.0 + (-x).exp());
                            *g += go * s * (1.0 - s);
                        }
                    }
                }
            });
        }
        Op::Affine { a, mul } => {
            let (a, mul) = (*a, *mul);
            if !nodes[a.0].requires_grad {
                return;
            }
            with_grad(nodes, grads, a, |ga| {
                for (g, &go) in ga.iter_mut().zip(gout) {
                    *g += mul * go;
                }
            });
        }
        Op::ChannelExtract { a, channel } => {
            let (a, channel) = (*a, *channel);
            if !nodes[a.0].requires_grad {
                return;
            }
            let channels = nodes[a.0].value.channels();
            with_grad(nodes, grads, a, |ga| {
                for (p, &go) in gout.iter().enumerate() {
                    ga[p * channels + channel] += go;
                }
            });
        }
        Op::Conv2d { input, kernels: kern, bias, k, cin, cout } => {
            let (input, kern, bias, k, cin, cout) = (*input, *kern, *bias, *k, *cin, *cout);
            let in_val = &nodes[input.0].value;
            let k_val = &nodes[kern.0].value;
            if nodes[input.0].requires_grad {
                with_grad(nodes, grads, input, |gin| {
                    kernels::conv2d_backward(gout, in_val, k_val, k, cin, cout, Some(gin), None, None);
                });
            }
            if nodes[kern.0].requires_grad {
                with_grad(nodes, grads, kern, |gk| {
                    kernels::conv2d_backward(gout, in_val, k_val, k, cin, cout, None, Some(gk), None);
                });
            }
            if nodes[bias.0].requires_grad {
                with_grad(nodes, grads, bias, |gb| {
                    kernels::conv2d_backward(gout, in_val, k_val, k, cin, cout, None, None, Some(gb));
                });
            }
        }
        Op::GaussianBlur { input, kernel } => {
            let input = *input;
            if !nodes[input.0].requires_grad {
                return;
            }
            let shape = nodes[input.0].value.shape();
            with_grad(nodes, grads, input, |gin| {
                kernels::gaussian_blur_backward(gout, gin, shape, kernel);
            });
        }
        Op::Resample { input } => {
            let input = *input;
            if !nodes[input.0].requires_grad {
                return;
            }
            let in_shape = nodes[input.0].value.shape();
            let out_shape = nodes[i].value.shape();
            with_grad(nodes, grads, input, |gin| {
                kernels::resample_bilinear_backward(gout, gin, in_shape, out_shape.height, out_shape.width);
            });
        }
        Op::GridSample { input, coords } => {
            let (input, coords) = (*input, *coords);
            let in_val = &nodes[input.0].value;
            let c_val = &nodes[coords.0].value;
            if nodes[input.0].requires_grad {
                with_grad(nodes, grads, input, |gin| {
                    kernels::grid_sample_backward(gout, in_val, c_val, Some(gin), None);
                });
            }
            if nodes[coords.0].requires_grad {
                with_grad(nodes, grads, coords, |gc| {
                    kernels::grid_sample_backward(gout, in_val, c_val, None, Some(gc));
                });
            }
        }
        Op::Reduce { kind, input, weights } => {
            let (kind, input, weights) = (*kind, *input, *weights);
            if !nodes[input.0].requires_grad {
                return;
            }
            let g = gout[0];
            with_grad(nodes, grads, input, |gin| match (kind, weights) {
                (ReduceKind::Sum, None) => {
                    for gi in gin.iter_mut() {
                        *gi += g;
                    }
                }
                (ReduceKind::Sum, Some(w)) => {
                    for (gi, &wv) in gin.iter_mut().zip(nodes[w.0].value.data()) {
                        *gi += g * wv;
                    }
                }
                (ReduceKind::Mean, None) => {
                    let n = nodes[input.0].value.numel() as f64;
                    for gi in gin.iter_mut() {
                        *gi += g / n;
                    }
                }
                (ReduceKind::Mean, Some(w)) => {
                    let wd = nodes[w.0].value.data();
                    let denom: f64 = wd.iter().sum();
                    for (gi, &wv) in gin.iter_mut().zip(wd) {
                        *gi += g * wv / denom;
                    }
                }
            });
        }
        Op::RgbToLab { input } => {
            let input = *input;
            if !nodes[input.0].requires_grad {
                return;
            }
            with_grad(nodes, grads, input, |gin| {
                let src = nodes[input.0].value.data();
                for (p, go) in gout.chunks_exact(3).enumerate() {
                    let raw = [src[p * 3], src[p * 3 + 1], src[p * 3 + 2]];
                    let pix = [raw[0].clamp(0.0, 1.0), raw[1].clamp(0.0, 1.0), raw[2].clamp(0.0, 1.0)];
                    let (_, jac) = colorops::srgb_to_lab_jacobian(pix);
                    for j in 0..3 {
                        // clamped inputs contribute no gradient
                        if raw[j] < 0.0 || raw[j] > 1.0 {
                            continue;
                        }
                        gin[p * 3 + j] += jac[0][j] * go[0] + jac[1][j] * go[1] + jac[2][j] * go[2];
                    }
                }
            });
        }
        Op::LabToRgb { input } => {
            let input = *input;
            if !nodes[input.0].requires_grad {
                return;
            }
            with_grad(nodes, grads, input, |gin| {
                let src = nodes[input.0].value.data();
                for (p, go) in gout.chunks_exact(3).enumerate() {
                    let pix = [src[p * 3], src[p * 3 + 1], src[p * 3 + 2]];
                    let (_, jac) = colorops::lab_to_srgb_jacobian(pix);
                    for j in 0..3 {
                        gin[p * 3 + j] += jac[0][j] * go[0] + jac[1][j] * go[1] + jac[2][j] * go[2];
                    }
                }
            });
        }
        Op::RecolorSlice { lab, grid, chroma_min, chroma_max } => {
            let (lab, grid, cmin, cmax) = (*lab, *grid, *chroma_min, *chroma_max);
            let lab_d = nodes[lab.0].value.data();
            let grid_t = &nodes[grid.0].value;
            let bins = grid_t.height();
            if nodes[grid.0].requires_grad {
                with_grad(nodes, grads, grid, |gg| {
                    recolor_slice_backward(gout, lab_d, grid_t.data(), bins, cmin, cmax, None, Some(gg));
                });
            }
            if nodes[lab.0].requires_grad {
                with_grad(nodes, grads, lab, |gl| {
                    recolor_slice_backward(gout, lab_d, grid_t.data(), bins, cmin, cmax, Some(gl), None);
                });
            }
        }
        Op::TvGrid { input } => {
            let input = *input;
            if !nodes[input.0].requires_grad {
                return;
            }
            let shape = nodes[input.0].value.shape();
            let g = gout[0];
            with_grad(nodes, grads, input, |gin| {
                let d = nodes[input.0].value.data();
                let (h, w, c) = (shape.height, shape.width, shape.channels);
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            let idx = (y * w + x) * c + ch;
                            let v = d[idx];
                            if y + 1 < h {
                                let jdx = ((y + 1) * w + x) * c + ch;
                                let s = sign(d[jdx] - v);
                                gin[jdx] += g * s;
                                gin[idx] -= g * s;
                            }
                            if x + 1 < w {
                                let jdx = (y * w + x + 1) * c + ch;
                                let s = sign(d[jdx] - v);
                                gin[jdx] += g * s;
                                gin[idx] -= g * s;
                            }
                        }
                    }
                }
            });
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Interpolated cell vector at chroma (a, b) plus the lookup geometry:
/// (vector, (i, j, fu, fv, du_da, dv_db)).
#[allow(clippy::type_complexity)]
pub(crate) fn slice_lookup(
    grid: &[f64],
    bins: usize,
    chroma_min: f64,
    chroma_max: f64,
    a: f64,
    b: f64,
) -> ([f64; 6], (usize, usize, f64, f64, f64, f64)) {
    let span = chroma_max - chroma_min;
    let scale = (bins - 1) as f64 / span;
    let u = (a.clamp(chroma_min, chroma_max) - chroma_min) * scale;
    let v = (b.clamp(chroma_min, chroma_max) - chroma_min) * scale;
    let i = (u.floor() as usize).min(bins - 2);
    let j = (v.floor() as usize).min(bins - 2);
    let fu = u - i as f64;
    let fv = v - j as f64;
    let du = if a > chroma_min && a < chroma_max { scale } else { 0.0 };
    let dv = if b > chroma_min && b < chroma_max { scale } else { 0.0 };
    let mut t = [0.0; 6];
    let corners = [
        ((i, j), (1.0 - fu) * (1.0 - fv)),
        ((i + 1, j), fu * (1.0 - fv)),
        ((i, j + 1), (1.0 - fu) * fv),
        ((i + 1, j + 1), fu * fv),
    ];
    for ((ci, cj), w) in corners {
        let base = (ci * bins + cj) * 6;
        for (tc, gv) in t.iter_mut().zip(&grid[base..base + 6]) {
            *tc += w * gv;
        }
    }
    (t, (i, j, fu, fv, du, dv))
}

#[allow(clippy::too_many_arguments)]
fn recolor_slice_backward(
    gout: &[f64],
    lab: &[f64],
    grid: &[f64],
    bins: usize,
    chroma_min: f64,
    chroma_max: f64,
    glab: Option<&mut [f64]>,
    ggrid: Option<&mut [f64]>,
) {
    let mut glab = glab;
    let mut ggrid = ggrid;
    for (p, go) in gout.chunks_exact(3).enumerate() {
        let (gl, ga_out, gb_out) = (go[0], go[1], go[2]);
        let a = lab[p * 3 + 1];
        let b = lab[p * 3 + 2];
        let (t, (i, j, fu, fv, du, dv)) = slice_lookup(grid, bins, chroma_min, chroma_max, a, b);
        // corner, weight, dweight/dfu, dweight/dfv
        let corners = [
            ((i, j), (1.0 - fu) * (1.0 - fv), -(1.0 - fv), -(1.0 - fu)),
            ((i + 1, j), fu * (1.0 - fv), 1.0 - fv, -fu),
            ((i, j + 1), (1.0 - fu) * fv, -fv, 1.0 - fu),
            ((i + 1, j + 1), fu * fv, fv, fu),
        ];
        if let Some(gg) = ggrid.as_deref_mut() {
            for ((ci, cj), w, _, _) in corners {
                let base = (ci * bins + cj) * 6;
                gg[base] += ga_out * w * a;
                gg[base + 1] += gb_out * w * a;
                gg[base + 2] += ga_out * w * b;
                gg[base + 3] += gb_out * w * b;
                gg[base + 4] += ga_out * w;
                gg[base + 5] += gb_out * w;
            }
        }
        if let Some(gl_buf) = glab.as_deref_mut() {
            let mut dt_du = [0.0; 6];
            let mut dt_dv = [0.0; 6];
            for ((ci, cj), _, dwu, dwv) in corners {
                let base = (ci * bins + cj) * 6;
                for c6 in 0..6 {
                    dt_du[c6] += dwu * grid[base + c6];
                    dt_dv[c6] += dwv * grid[base + c6];
                }
            }
            // a' = a t0 + b t2 + t4, b' = a t1 + b t3 + t5
            let dap_da = t[0] + du * (a * dt_du[0] + b * dt_du[2] + dt_du[4]);
            let dbp_da = t[1] + du * (a * dt_du[1] + b * dt_du[3] + dt_du[5]);
            let dap_db = t[2] + dv * (a * dt_dv[0] + b * dt_dv[2] + dt_dv[4]);
            let dbp_db = t[3] + dv * (a * dt_dv[1] + b * dt_dv[3] + dt_dv[5]);
            gl_buf[p * 3] += gl;
            gl_buf[p * 3 + 1] += ga_out * dap_da + gb_out * dbp_da;
            gl_buf[p * 3 + 2] += ga_out * dap_db + gb_out * dbp_db;
        }
    }
}
