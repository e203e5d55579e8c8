//! Central finite-difference verification of the tape's analytic gradients.

use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::SeedableRng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Perturbation for central differences.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Cap on coordinates checked per tensor; larger tensors are subsampled
    /// deterministically. `None` checks every coordinate.
    pub max_coords: Option<usize>,
    /// Seed for the coordinate subsample.
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { step: 1e-4, tolerance: 1e-4, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (flat coordinate, analytic, numeric) for the worst coordinate.
    pub worst: Option<(usize, f64, f64)>,
}

impl TensorCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error <= tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn pass(&self) -> bool {
        self.tensors.iter().all(|t| t.passes(self.tolerance))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    if !analytic.is_finite() || !numeric.is_finite() {
        return f64::INFINITY;
    }
    // the denominator floor turns the check absolute for near-zero
    // gradients, where central differences are pure cancellation noise
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / denom
}

/// Compare analytic gradients of a scalar-valued graph against central
/// finite differences for every supplied input tensor.
///
/// The builder is invoked on a fresh graph per evaluation and must be
/// deterministic. Kinked sample points (relu at zero, integer sampling
/// coordinates) are the caller's responsibility to avoid.
pub fn gradcheck<F>(build: F, inputs: &[Tensor], opts: &GradcheckOptions) -> GradcheckReport
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    // Analytic pass: all inputs as parameters.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &ids);
    assert!(g.shape(loss).is_scalar(), "gradcheck requires a scalar loss, got {}", g.shape(loss));
    let analytic: Vec<Option<Tensor>> = match g.backward(loss) {
        Ok(()) => ids.iter().map(|&id| g.grad(id)).collect(),
        Err(_) => vec![None; ids.len()],
    };

    let eval = |tensors: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.value(loss).scalar_value()
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut tensors = Vec::with_capacity(inputs.len());
    for (ti, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(cap) if n > cap => sample(&mut rng, n, cap).into_vec(),
            _ => (0..n).collect(),
        };
        let grad = analytic[ti].as_ref();
        let mut check = TensorCheck { max_rel_error: 0.0, coords_checked: coords.len(), worst: None };
        for &c in &coords {
            let a = match grad {
                Some(t) => t.data()[c],
                None => f64::NAN,
            };
            let orig = work[ti].data()[c];
            work[ti].data_mut()[c] = orig + opts.step;
            let hi = eval(&work);
            work[ti].data_mut()[c] = orig - opts.step;
            let lo = eval(&work);
            work[ti].data_mut()[c] = orig;
            let numeric = (hi - lo) / (2.0 * opts.step);
            let err = rel_error(a, numeric);
            if err > check.max_rel_error || check.worst.is_none() {
                check.max_rel_error = err;
                check.worst = Some((c, a, numeric));
            }
        }
        tensors.push(check);
    }
    GradcheckReport { tensors, tolerance: opts.tolerance }
}
