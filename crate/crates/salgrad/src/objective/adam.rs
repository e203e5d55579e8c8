//! Bias-corrected Adam over lists of parameter tensors.

use thiserror::Error;

use crate::diffcore::Tensor;

#[derive(Debug, Error)]
pub enum AdamError {
    #[error("nonfinite gradient at optimizer step {step} (tensor {tensor}, coord {coord})")]
    NonFiniteGradient { step: u64, tensor: usize, coord: usize },
}

/// Standard Adam with bias correction. One instance owns the moment state
/// for a fixed list of parameter tensors, updated in place each step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i]` pairs with `params[i]`; a `None` grad
    /// leaves that tensor's moments decaying (gradient treated as zero).
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) -> Result<(), AdamError> {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        // validate before touching any parameter so an abort never leaves a
        // half-applied update
        for (ti, grad) in grads.iter().enumerate() {
            if let Some(g) = grad {
                assert_eq!(g.shape(), params[ti].shape(), "grad shape mismatch for tensor {ti}");
                if let Some(ci) = g.data().iter().position(|v| !v.is_finite()) {
                    return Err(AdamError::NonFiniteGradient { step: self.step + 1, tensor: ti, coord: ci });
                }
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (ti, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            let zero;
            let gdata: &[f64] = match &grads[ti] {
                Some(g) => g.data(),
                None => {
                    zero = vec![0.0; param.numel()];
                    &zero
                }
            };
            for ((p, (mi, vi)), &g) in
                param.data_mut().iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(gdata)
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Shape;

    /// Scalar reference Adam, written independently of the vector path.
    fn scalar_adam_step(p: f64, g: f64, m: f64, v: f64, t: u64, lr: f64) -> (f64, f64, f64) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let m = b1 * m + (1.0 - b1) * g;
        let v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        (p - lr * m_hat / (v_hat.sqrt() + eps), m, v)
    }

    #[test]
    fn zero_gradient_leaves_params_and_advances_step() {
        let mut p = Tensor::new(Shape::new(1, 2, 1), vec![1.0, -3.0]);
        let before = p.clone();
        let mut adam = Adam::new(0.1);
        adam.step(&mut [&mut p], &[Some(Tensor::zeros(1, 2, 1))]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_matches_scalar_oracle() {
        let grads = [0.3, -2.0, 1e-5];
        let mut p = Tensor::new(Shape::new(1, 3, 1), vec![0.1, 0.2, 0.3]);
        let mut adam = Adam::new(0.05);
        adam.step(&mut [&mut p], &[Some(Tensor::new(Shape::new(1, 3, 1), grads.to_vec()))]).unwrap();
        for i in 0..3 {
            let (expect, _, _) = scalar_adam_step([0.1, 0.2, 0.3][i], grads[i], 0.0, 0.0, 1, 0.05);
            assert!((p.data()[i] - expect).abs() < 1e-15, "coord {i}");
            // first-step magnitude is ~lr in the gradient's sign direction
            let step = p.data()[i] - [0.1, 0.2, 0.3][i];
            assert!((step.abs() - 0.05).abs() < 0.05 * 1e-2);
            assert_eq!(step.signum(), -grads[i].signum());
        }
    }

    #[test]
    fn several_steps_match_scalar_oracle() {
        let mut p = Tensor::new(Shape::new(1, 1, 1), vec![2.0]);
        let mut adam = Adam::new(0.02);
        let (mut sp, mut sm, mut sv) = (2.0, 0.0, 0.0);
        for t in 1..=20u64 {
            let g = (t as f64 * 0.7).sin();
            adam.step(&mut [&mut p], &[Some(Tensor::scalar(g))]).unwrap();
            let (np, nm, nv) = scalar_adam_step(sp, g, sm, sv, t, 0.02);
            sp = np;
            sm = nm;
            sv = nv;
            assert!((p.scalar_value() - sp).abs() < 1e-14, "step {t}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = |x - c|^2, gradient 2(x - c)
        let c = [0.7, -1.2, 3.4];
        let mut x = Tensor::new(Shape::new(1, 3, 1), vec![0.0, 0.0, 0.0]);
        let mut adam = Adam::new(0.05);
        for _ in 0..2000 {
            let g: Vec<f64> = x.data().iter().zip(&c).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            adam.step(&mut [&mut x], &[Some(Tensor::new(Shape::new(1, 3, 1), g))]).unwrap();
        }
        for (xi, ci) in x.data().iter().zip(&c) {
            assert!((xi - ci).abs() < 1e-3, "converged to {xi}, wanted {ci}");
        }
    }

    #[test]
    fn nonfinite_gradient_reports_step() {
        let mut p = Tensor::scalar(1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut [&mut p], &[Some(Tensor::scalar(1.0))]).unwrap();
        let err = adam.step(&mut [&mut p], &[Some(Tensor::scalar(f64::NAN))]);
        match err {
            Err(AdamError::NonFiniteGradient { step, .. }) => assert_eq!(step, 2),
            other => panic!("expected nonfinite gradient error, got {other:?}"),
        }
    }
}
